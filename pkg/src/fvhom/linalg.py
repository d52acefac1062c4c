"""CSR sparse matrices, ILU(0), and the BiCGStab / CG iterative solvers."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels
from .errors import ConfigError, FactorizationError, SolveError


@dataclass(frozen=True)
class CsrMatrix:
    """Square sparse matrix in CSR form with sorted, duplicate-free columns."""

    n: int
    row_ptr: np.ndarray  # int64, length n+1
    col_idx: np.ndarray  # int64, length nnz
    values: np.ndarray   # float64, length nnz

    @classmethod
    def from_coo(cls, n: int, rows, cols, vals) -> "CsrMatrix":
        """Build from triplets, summing duplicates; keeps explicit zeros."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        if rows.size and (rows.min() < 0 or rows.max() >= n):
            raise ConfigError("row index out of range")
        if cols.size and (cols.min() < 0 or cols.max() >= n):
            raise ConfigError("column index out of range")
        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
        if rows.size:
            keep = np.ones(rows.size, dtype=bool)
            keep[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
            starts = np.flatnonzero(keep)
            vals = np.add.reduceat(vals, starts)
            rows, cols = rows[starts], cols[starts]
        row_ptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(row_ptr, rows + 1, 1)
        np.cumsum(row_ptr, out=row_ptr)
        return cls(n, row_ptr, cols, vals)

    @classmethod
    def from_dense(cls, a: np.ndarray) -> "CsrMatrix":
        a = np.asarray(a, dtype=float)
        rows, cols = np.nonzero(a)
        return cls.from_coo(a.shape[0], rows, cols, a[rows, cols])

    @property
    def nnz(self) -> int:
        return int(self.col_idx.size)

    def entry_rows(self) -> np.ndarray:
        """Row index of every stored entry (the COO expansion of row_ptr)."""
        return np.repeat(np.arange(self.n, dtype=np.int64), np.diff(self.row_ptr))

    def matvec(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,):
            raise ConfigError(f"vector length {x.shape} does not match n={self.n}")
        out = np.empty(self.n)
        _kernels.csr_matvec(self.row_ptr, self.col_idx, self.values, x, out)
        return out

    def transpose(self) -> "CsrMatrix":
        return CsrMatrix.from_coo(self.n, self.col_idx, self.entry_rows(), self.values)

    def diagonal(self) -> np.ndarray:
        rows = self.entry_rows()
        hit = self.col_idx == rows
        d = np.zeros(self.n)
        d[rows[hit]] = self.values[hit]
        return d

    def to_dense(self) -> np.ndarray:
        a = np.zeros((self.n, self.n))
        a[self.entry_rows(), self.col_idx] = self.values
        return a

    def with_added_diagonal(self, extra: np.ndarray) -> "CsrMatrix":
        """Return a copy with ``extra[i]`` added to each diagonal entry."""
        extra = np.asarray(extra, dtype=float)
        values = self.values.copy()
        values[_diag_positions(self)] += extra
        return CsrMatrix(self.n, self.row_ptr, self.col_idx, values)


def _diag_positions(a: CsrMatrix) -> np.ndarray:
    """Position of the diagonal entry in each row; raises if one is missing."""
    rows = a.entry_rows()
    pos = np.flatnonzero(a.col_idx == rows)
    if pos.size != a.n:
        present = np.zeros(a.n, dtype=bool)
        present[rows[pos]] = True
        missing = int(np.flatnonzero(~present)[0])
        raise FactorizationError(f"row {missing} has no diagonal entry", row=missing)
    return pos


@dataclass
class SolveReport:
    iterations: int
    final_relative_residual: float
    converged: bool
    method: str = ""
    breakdown: bool = False

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "final_relative_residual": self.final_relative_residual,
            "converged": self.converged,
            "method": self.method,
            "breakdown": self.breakdown,
        }


@dataclass(frozen=True)
class Ilu0Factors:
    """ILU(0) factors on the matrix pattern: unit-lower L, upper U."""

    n: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    lu: np.ndarray        # strictly-lower part holds L (unit diagonal implicit)
    diag_idx: np.ndarray

    def apply(self, r: np.ndarray) -> np.ndarray:
        """Return z solving (L U) z = r by forward/backward substitution."""
        y = np.empty(self.n)
        _kernels.lower_unit_solve(self.row_ptr, self.col_idx, self.lu, r, y)
        z = np.empty(self.n)
        _kernels.upper_solve(self.row_ptr, self.col_idx, self.lu, self.diag_idx, y, z)
        return z

    def lower(self) -> CsrMatrix:
        """L as an explicit CSR matrix, unit diagonal included."""
        rows = np.repeat(np.arange(self.n, dtype=np.int64), np.diff(self.row_ptr))
        strict = self.col_idx < rows
        all_rows = np.concatenate([rows[strict], np.arange(self.n, dtype=np.int64)])
        all_cols = np.concatenate([self.col_idx[strict], np.arange(self.n, dtype=np.int64)])
        all_vals = np.concatenate([self.lu[strict], np.ones(self.n)])
        return CsrMatrix.from_coo(self.n, all_rows, all_cols, all_vals)

    def upper(self) -> CsrMatrix:
        rows = np.repeat(np.arange(self.n, dtype=np.int64), np.diff(self.row_ptr))
        keep = self.col_idx >= rows
        return CsrMatrix.from_coo(self.n, rows[keep], self.col_idx[keep], self.lu[keep])


def ilu0(a: CsrMatrix) -> Ilu0Factors:
    """ILU(0): incomplete LU restricted to the sparsity pattern of ``a``."""
    diag_idx = _diag_positions(a)
    max_diag = float(np.abs(a.values[diag_idx]).max()) if a.n else 0.0
    pivot_floor = 1e-14 * max(max_diag, 1e-300)
    lu = a.values.copy()
    bad = _kernels.ilu0_factor(a.row_ptr, a.col_idx, lu, diag_idx, pivot_floor)
    if bad >= 0:
        raise FactorizationError(f"zero or near-zero pivot in row {bad}", row=int(bad))
    return Ilu0Factors(a.n, a.row_ptr, a.col_idx, lu, diag_idx)


def _check_inputs(a: CsrMatrix, b: np.ndarray, tol: float):
    if b.shape != (a.n,):
        raise ConfigError(f"rhs length {b.shape} does not match n={a.n}")
    if not tol > 0.0:
        raise ConfigError(f"tolerance must be positive, got {tol}")


def default_maxit(n: int) -> int:
    return max(20, int(20 * np.sqrt(n)))


def bicgstab(
    a: CsrMatrix,
    b: np.ndarray,
    precond: Optional[Ilu0Factors] = None,
    tol: float = 1e-10,
    maxit: Optional[int] = None,
) -> tuple[np.ndarray, SolveReport]:
    """Preconditioned BiCGStab; converged means ||b - a x||_2 <= tol * ||b||_2.

    Convergence is always confirmed against the recomputed true residual.  On
    a rho/omega breakdown the iteration restarts once from the current
    iterate; a second breakdown raises SolveError with the report attached.
    A zero right-hand side returns the zero vector immediately.
    """
    b = np.asarray(b, dtype=float)
    _check_inputs(a, b, tol)
    if maxit is None:
        maxit = default_maxit(a.n)
    norm_b = float(np.linalg.norm(b))
    if norm_b == 0.0:
        return np.zeros(a.n), SolveReport(0, 0.0, True, "bicgstab")

    apply_m = precond.apply if precond is not None else (lambda r: r)
    tiny = 1e-300
    x = np.zeros(a.n)
    r = b.copy()
    r0 = r.copy()
    rho = alpha = omega = 1.0
    v = np.zeros(a.n)
    p = np.zeros(a.n)
    restarted = False
    iters = 0

    def true_residual() -> float:
        return float(np.linalg.norm(b - a.matvec(x))) / norm_b

    def restart():
        nonlocal r, r0, rho, alpha, omega, v, p
        r = b - a.matvec(x)
        r0 = r.copy()
        rho = alpha = omega = 1.0
        v = np.zeros(a.n)
        p = np.zeros(a.n)

    while iters < maxit:
        iters += 1
        rho_new = float(r0 @ r)
        if abs(rho_new) < tiny or abs(omega) < tiny:
            if restarted:
                report = SolveReport(iters, true_residual(), False, "bicgstab", breakdown=True)
                raise SolveError("bicgstab breakdown persisted after one restart", report=report)
            restarted = True
            restart()
            rho_new = float(r0 @ r)
            if abs(rho_new) < tiny:
                rel = true_residual()
                return x, SolveReport(iters, rel, rel <= tol, "bicgstab")
        beta = (rho_new / rho) * (alpha / omega)
        p = r + beta * (p - omega * v)
        rho = rho_new
        p_hat = apply_m(p)
        v = a.matvec(p_hat)
        denom = float(r0 @ v)
        if abs(denom) < tiny:
            omega = 0.0  # trigger breakdown handling at the top of the loop
            continue
        alpha = rho / denom
        s = r - alpha * v
        if float(np.linalg.norm(s)) / norm_b <= tol:
            x = x + alpha * p_hat
            rel = true_residual()
            if rel <= tol:
                return x, SolveReport(iters, rel, True, "bicgstab")
            restart()
            continue
        s_hat = apply_m(s)
        t = a.matvec(s_hat)
        tt = float(t @ t)
        if tt < tiny:
            omega = 0.0
            continue
        omega = float(t @ s) / tt
        x = x + alpha * p_hat + omega * s_hat
        r = s - omega * t
        if float(np.linalg.norm(r)) / norm_b <= tol:
            rel = true_residual()
            if rel <= tol:
                return x, SolveReport(iters, rel, True, "bicgstab")

    rel = true_residual()
    return x, SolveReport(iters, rel, rel <= tol, "bicgstab")


def cg(
    a: CsrMatrix,
    b: np.ndarray,
    tol: float = 1e-10,
    maxit: Optional[int] = None,
) -> tuple[np.ndarray, SolveReport]:
    """Conjugate gradients for symmetric positive definite systems."""
    b = np.asarray(b, dtype=float)
    _check_inputs(a, b, tol)
    if maxit is None:
        maxit = default_maxit(a.n)
    norm_b = float(np.linalg.norm(b))
    if norm_b == 0.0:
        return np.zeros(a.n), SolveReport(0, 0.0, True, "cg")

    x = np.zeros(a.n)
    r = b.copy()
    p = r.copy()
    rs = float(r @ r)
    iters = 0
    while iters < maxit:
        iters += 1
        ap = a.matvec(p)
        denom = float(p @ ap)
        if denom <= 0.0:
            rel = float(np.linalg.norm(b - a.matvec(x))) / norm_b
            report = SolveReport(iters, rel, False, "cg", breakdown=True)
            raise SolveError("cg breakdown: matrix not positive definite on a search direction", report=report)
        alpha = rs / denom
        x += alpha * p
        r -= alpha * ap
        rs_new = float(r @ r)
        if np.sqrt(rs_new) / norm_b <= tol:
            rel = float(np.linalg.norm(b - a.matvec(x))) / norm_b
            if rel <= tol:
                return x, SolveReport(iters, rel, True, "cg")
        p = r + (rs_new / rs) * p
        rs = rs_new
    rel = float(np.linalg.norm(b - a.matvec(x))) / norm_b
    return x, SolveReport(iters, rel, rel <= tol, "cg")


def write_matrix_market(path, a: CsrMatrix) -> None:
    """Dump in MatrixMarket coordinate format (1-based, general real)."""
    rows = a.entry_rows()
    with open(path, "w", encoding="ascii") as fh:
        fh.write("%%MatrixMarket matrix coordinate real general\n")
        fh.write(f"{a.n} {a.n} {a.nnz}\n")
        for i, j, v in zip(rows, a.col_idx, a.values):
            fh.write(f"{i + 1} {j + 1} {v:.17g}\n")
