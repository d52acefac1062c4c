"""Effective (homogenized) coefficient matrices and convergence-rate studies.

The approximate effective matrix on Q_R averages the flux of the corrected
fields: column j is the volume average of A(y)(e_j + grad chi_j(y)).  For
fields that repeat on the unit square the cell problem with periodic
boundary conditions provides an independent reference value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Optional, Sequence

import numpy as np

from .coefficients import AnyField, is_diagonal, is_unit_periodic
from .corrector import CorrectorSet, solve_corrector_set
from .errors import ConfigError, SolveError
from .linalg import CsrMatrix, cg
from .mesh import GridField, StructuredMesh, build_uniform_mesh, cell_coefficient_samples


@dataclass
class EffectiveMatrix:
    """A 2x2 effective coefficient matrix with provenance metadata."""

    m: np.ndarray
    provenance: dict = dc_field(default_factory=dict)
    symmetrized: bool = False

    def __post_init__(self):
        self.m = np.asarray(self.m, dtype=float)
        if self.m.shape != (2, 2):
            raise ConfigError(f"effective matrix must be 2x2, got {self.m.shape}")

    def asymmetry(self) -> float:
        return float(np.abs(self.m - self.m.T).max())

    def symmetrized_copy(self) -> "EffectiveMatrix":
        return EffectiveMatrix(0.5 * (self.m + self.m.T), dict(self.provenance), True)


@dataclass
class RateRow:
    param: float
    matrix: np.ndarray
    err_max: float
    is_reference: bool = False


@dataclass
class RateTable:
    """Error-vs-parameter table, rows ordered by strictly increasing parameter."""

    rows: list[RateRow]

    def __post_init__(self):
        params = [r.param for r in self.rows]
        if any(b <= a for a, b in zip(params, params[1:])):
            raise ConfigError("rate table parameters must be strictly increasing")

    def params(self) -> np.ndarray:
        return np.array([r.param for r in self.rows])

    def errors(self) -> np.ndarray:
        return np.array([r.err_max for r in self.rows])

    def to_csv(self, path, header_comment: Optional[str] = None) -> None:
        with open(path, "w", encoding="ascii") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            fh.write("param,m11,m12,m21,m22,err_max,ref\n")
            for r in self.rows:
                m = r.matrix
                fh.write(
                    f"{r.param:.17g},{m[0, 0]:.17g},{m[0, 1]:.17g},"
                    f"{m[1, 0]:.17g},{m[1, 1]:.17g},{r.err_max:.17g},{int(r.is_reference)}\n"
                )


def effective_matrix_from_set(
    fld: AnyField, correctors: CorrectorSet, cell_average: str = "midpoint"
) -> EffectiveMatrix:
    """Average A(y)(I + grad chi) over the corrector mesh, column per direction."""
    mesh = correctors.mesh
    a11, a22 = cell_coefficient_samples(mesh, fld, cell_average)
    m = np.empty((2, 2))
    for j in (0, 1):
        gx, gy = correctors.grad(j)
        m[0, j] = np.mean(a11 * ((1.0 if j == 0 else 0.0) + gx.values))
        m[1, j] = np.mean(a22 * ((0.0 if j == 0 else 1.0) + gy.values))
    return EffectiveMatrix(
        m,
        provenance={
            "R": correctors.R,
            "T": correctors.T,
            "h": correctors.h,
            "kind": "dirichlet" if correctors.T is None else "regularized",
        },
    )


def effective_matrix_dirichlet(
    fld: AnyField,
    R: float,
    h: float,
    tol: float = 1e-10,
    maxit: Optional[int] = None,
    cell_average: str = "midpoint",
) -> EffectiveMatrix:
    """Effective matrix from the zero-Dirichlet truncated correctors on Q_R."""
    cs = solve_corrector_set(fld, R, h, None, tol, maxit, cell_average)
    return effective_matrix_from_set(fld, cs, cell_average)


def effective_matrix_regularized(
    fld: AnyField,
    R: float,
    T: float,
    h: float,
    tol: float = 1e-10,
    maxit: Optional[int] = None,
    cell_average: str = "midpoint",
) -> EffectiveMatrix:
    """Effective matrix from the regularized truncated correctors on Q_R."""
    cs = solve_corrector_set(fld, R, h, T, tol, maxit, cell_average)
    return effective_matrix_from_set(fld, cs, cell_average)


# --- periodic cell problem on the unit square ---------------------------------


def _periodic_edges(n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """All edges of the n x n torus grid: (i, j, axis), wrap-around included."""
    iy, ix = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    base = (iy * n + ix).ravel()
    right = (iy * n + (ix + 1) % n).ravel()
    up = (((iy + 1) % n) * n + ix).ravel()
    i = np.concatenate([base, base])
    j = np.concatenate([right, up])
    axis = np.concatenate([np.zeros(n * n, dtype=np.int64), np.ones(n * n, dtype=np.int64)])
    return i, j, axis


def _periodic_gradient(mesh: StructuredMesh, u: GridField) -> tuple[GridField, GridField]:
    v = u.values2d()
    gx = (np.roll(v, -1, axis=1) - np.roll(v, 1, axis=1)) / (2.0 * mesh.hx)
    gy = (np.roll(v, -1, axis=0) - np.roll(v, 1, axis=0)) / (2.0 * mesh.hy)
    return GridField(mesh, gx.ravel()), GridField(mesh, gy.ravel())


def periodic_cell_effective(
    fld: AnyField,
    h: float,
    tol: float = 1e-10,
    maxit: Optional[int] = None,
) -> EffectiveMatrix:
    """Effective matrix from the cell problem on (0,1)^2 with periodic edges.

    The singular periodic system is pinned at cell 0, solved with CG, and the
    solution de-meaned afterwards; the gradient (all the average needs) does
    not depend on the pinning.  Requires a strictly unit-periodic field.
    """
    if not is_diagonal(fld):
        raise ConfigError("the cell problem is assembled for diagonal fields only")
    if not is_unit_periodic(fld):
        raise ConfigError(
            "field is not unit-periodic (needs trig frequencies at integer multiples "
            "of 2*pi and no Gaussian terms)"
        )
    n = 1.0 / h
    if abs(n - round(n)) > 1e-9 * max(1.0, n):
        raise ConfigError(f"h={h} does not divide the unit cell evenly")
    n = int(round(n))
    if n < 3:
        raise ConfigError("periodic cell mesh needs at least 3 cells per axis")
    mesh = build_uniform_mesh((0.0, 0.0), (1.0, 1.0), (n, n))
    a11, a22 = cell_coefficient_samples(mesh, fld)
    if a11.min() <= 0.0 or a22.min() <= 0.0:
        raise ConfigError("cell problem needs a pointwise positive field")

    i, j, axis = _periodic_edges(n)
    comp_i = np.where(axis == 0, a11[i], a22[i])
    comp_j = np.where(axis == 0, a11[j], a22[j])
    meas = np.where(axis == 0, mesh.hy, mesh.hx)
    dist = np.where(axis == 0, mesh.hx, mesh.hy)
    tau = meas * 2.0 * comp_i * comp_j / ((comp_i + comp_j) * dist)

    rows = np.concatenate([i, j, i, j])
    cols = np.concatenate([i, j, j, i])
    vals = np.concatenate([tau, tau, -tau, -tau])

    grads = []
    for direction in (0, 1):
        sel = axis == direction
        a_edge = 2.0 * comp_i[sel] * comp_j[sel] / (comp_i[sel] + comp_j[sel])
        m_edge = meas[sel]
        rhs = np.zeros(mesh.n_cells)
        np.add.at(rhs, i[sel], m_edge * a_edge)
        np.add.at(rhs, j[sel], -m_edge * a_edge)

        # pin cell 0 at zero: drop its row/column, solve the SPD remainder
        keep = (rows != 0) & (cols != 0)
        matrix = CsrMatrix.from_coo(
            mesh.n_cells - 1, rows[keep] - 1, cols[keep] - 1, vals[keep]
        )
        x_red, report = cg(matrix, rhs[1:], tol=tol, maxit=maxit)
        if not report.converged:
            raise SolveError(
                f"periodic cell solve (direction {direction + 1}) did not converge",
                report=report,
            )
        chi = np.concatenate([[0.0], x_red])
        chi -= chi.mean()
        grads.append(_periodic_gradient(mesh, GridField(mesh, chi)))

    m = np.empty((2, 2))
    for jdir, (gx, gy) in enumerate(grads):
        m[0, jdir] = np.mean(a11 * ((1.0 if jdir == 0 else 0.0) + gx.values))
        m[1, jdir] = np.mean(a22 * ((0.0 if jdir == 0 else 1.0) + gy.values))
    return EffectiveMatrix(m, provenance={"h": h, "kind": "periodic_cell"})


def eta_delta(t: float, delta: float, c1: float) -> float:
    """Rate bound 1/t + t*exp(-(c1/2)*t^(1+delta)) + t^((delta-1)/2) for t >= 1."""
    if not t >= 1.0:
        raise ConfigError(f"t must be >= 1, got {t}")
    if not 0.0 < delta < 1.0:
        raise ConfigError(f"delta must lie in (0, 1), got {delta}")
    if not c1 > 0.0:
        raise ConfigError(f"c1 must be positive, got {c1}")
    return 1.0 / t + t * math.exp(-0.5 * c1 * t ** (1.0 + delta)) + t ** (0.5 * (delta - 1.0))


def loglog_slope(params: Sequence[float], errors: Sequence[float]) -> float:
    """Least-squares slope of log(error) against log(parameter)."""
    lp = np.log(np.asarray(params, dtype=float))
    le = np.log(np.asarray(errors, dtype=float))
    return float(np.polyfit(lp, le, 1)[0])


def truncation_study(
    fld: AnyField,
    R_list: Sequence[float],
    h: float,
    use_T_equals_R: bool = False,
    reference: Optional[EffectiveMatrix] = None,
    tol: float = 1e-10,
    maxit: Optional[int] = None,
    cell_average: str = "midpoint",
) -> RateTable:
    """Error |A*_R - reference| against the truncation size R.

    For unit-periodic fields the default reference is the periodic cell value
    at the same h; otherwise the largest-R entry serves as reference and its
    row is flagged so the self-comparison is explicit.
    """
    R_list = sorted(float(r) for r in R_list)
    if len(set(R_list)) != len(R_list) or not R_list:
        raise ConfigError("R_list must be non-empty with distinct values")
    matrices = []
    for R in R_list:
        if use_T_equals_R:
            em = effective_matrix_regularized(fld, R, R, h, tol, maxit, cell_average)
        else:
            em = effective_matrix_dirichlet(fld, R, h, tol, maxit, cell_average)
        matrices.append(em)

    self_referenced = False
    if reference is None:
        if is_unit_periodic(fld) and is_diagonal(fld):
            reference = periodic_cell_effective(fld, h, tol, maxit)
        else:
            reference = matrices[-1]
            self_referenced = True

    rows = []
    for R, em in zip(R_list, matrices):
        err = float(np.abs(em.m - reference.m).max())
        is_ref = self_referenced and em is matrices[-1]
        rows.append(RateRow(R, em.m, err, is_ref))
    return RateTable(rows)


def regularization_study(
    fld: AnyField,
    R: float,
    T_list: Sequence[float],
    h: float,
    tol: float = 1e-10,
    maxit: Optional[int] = None,
    cell_average: str = "midpoint",
) -> RateTable:
    """Error |A*_{R,T} - A*_{R,inf}| against T at fixed truncation and mesh.

    The reference A*_{R,inf} is the zero-Dirichlet matrix on the same mesh, so
    the tabulated differences isolate the effect of the zero-order term.
    """
    T_list = sorted(float(t) for t in T_list)
    if len(set(T_list)) != len(T_list) or not T_list:
        raise ConfigError("T_list must be non-empty with distinct values")
    ref = effective_matrix_dirichlet(fld, R, h, tol, maxit, cell_average)
    rows = []
    for T in T_list:
        em = effective_matrix_regularized(fld, R, T, h, tol, maxit, cell_average)
        rows.append(RateRow(T, em.m, float(np.abs(em.m - ref.m).max())))
    return RateTable(rows)
