"""Truncated corrector problems on centered squares and field post-processing.

The truncated corrector in direction e_j solves -div(A (e_j + grad chi)) = 0
on the square Q_R = (-R, R)^2 with zero Dirichlet data.  The regularized
variant adds a zero-order term T^-2 chi.  The divergence-form right-hand side
div(A e_j) is assembled edge-wise with the same harmonically averaged edge
coefficients as the transmissibilities, so it cancels exactly for constant
fields and the discrete problem inherits the weak form's compatibility.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .coefficients import AnyField
from .errors import ConfigError, DomainError, SolveError
from .linalg import SolveReport, bicgstab, ilu0
from .mesh import (
    GridField,
    StructuredMesh,
    _boundary_cells,
    assemble_tpfa,
    build_uniform_mesh,
    cell_coefficient_samples,
    interior_edge_pairs,
)


@dataclass
class CorrectorEntry:
    """One direction's corrector: values, cell gradient, and solve metadata."""

    direction: int  # 0 -> e_1, 1 -> e_2
    chi: GridField
    grad: tuple[GridField, GridField]
    report: SolveReport
    R: float
    T: Optional[float]
    h: float

    def meta(self) -> dict:
        return {
            "direction": self.direction + 1,
            "R": self.R,
            "T": self.T,
            "h": self.h,
            "report": self.report.to_dict(),
        }


@dataclass
class CorrectorSet:
    """Correctors for both coordinate directions on a shared Q_R mesh."""

    mesh: StructuredMesh
    entries: tuple[CorrectorEntry, CorrectorEntry]
    R: float
    T: Optional[float]
    h: float

    def chi(self, direction: int) -> GridField:
        return self.entries[direction].chi

    def grad(self, direction: int) -> tuple[GridField, GridField]:
        return self.entries[direction].grad


def corrector_mesh(R: float, h: float) -> StructuredMesh:
    """Mesh for Q_R = (-R, R)^2; h must divide the side length 2R evenly."""
    if not R > 0.0:
        raise ConfigError(f"R must be positive, got {R}")
    side = 2.0 * R
    n = side / h
    if abs(n - round(n)) > 1e-9 * max(1.0, n):
        raise ConfigError(f"h={h} does not divide the square side {side} evenly")
    n = int(round(n))
    return build_uniform_mesh((-R, -R), (side, side), (n, n))


def divergence_source(
    mesh: StructuredMesh, field: AnyField, direction: int, cell_average: str = "midpoint"
) -> np.ndarray:
    """Per-cell integral of div(A e_direction), assembled edge-wise.

    Interior edges carry the harmonic mean of the two adjacent coefficient
    samples (the transmissibility's coefficient combination); boundary edges
    carry the one-sided sample.  Summing the signed edge contributions of a
    constant field telescopes to exactly zero.
    """
    if direction not in (0, 1):
        raise ConfigError(f"direction must be 0 or 1, got {direction}")
    a11, a22 = cell_coefficient_samples(mesh, field, cell_average)
    comp = a11 if direction == 0 else a22
    i, j, axis = interior_edge_pairs(mesh)
    sel = axis == direction
    i, j = i[sel], j[sel]
    meas = mesh.hy if direction == 0 else mesh.hx
    a_edge = 2.0 * comp[i] * comp[j] / (comp[i] + comp[j])
    rhs = np.zeros(mesh.n_cells)
    np.add.at(rhs, i, meas * a_edge)   # outward normal +e_dir seen from i
    np.add.at(rhs, j, -meas * a_edge)  # and -e_dir seen from j
    low, high = ("left", "right") if direction == 0 else ("bottom", "top")
    cells_lo, _ = _boundary_cells(mesh, low)
    cells_hi, _ = _boundary_cells(mesh, high)
    np.add.at(rhs, cells_lo, -meas * comp[cells_lo])
    np.add.at(rhs, cells_hi, meas * comp[cells_hi])
    return rhs


def _solve_corrector(
    field: AnyField,
    R: float,
    h: float,
    direction: int,
    T: Optional[float],
    tol: float,
    maxit: Optional[int],
    cell_average: str,
) -> CorrectorEntry:
    mesh = corrector_mesh(R, h)
    rhs = divergence_source(mesh, field, direction, cell_average)
    system = assemble_tpfa(mesh, field, dirichlet=None, source=rhs, cell_average=cell_average)
    matrix = system.matrix
    if T is not None:
        matrix = matrix.with_added_diagonal(np.full(mesh.n_cells, mesh.cell_volume / T**2))
    x, report = bicgstab(matrix, system.rhs, precond=ilu0(matrix), tol=tol, maxit=maxit)
    if not report.converged:
        raise SolveError(
            f"corrector solve (direction {direction + 1}, R={R}, T={T}) did not converge: "
            f"rel. residual {report.final_relative_residual:.3e} after {report.iterations} iterations",
            report=report,
        )
    chi = GridField(mesh, x)
    return CorrectorEntry(direction, chi, cell_gradient(chi), report, R, T, h)


def solve_dirichlet_corrector(
    field: AnyField,
    R: float,
    h: float,
    direction: int,
    tol: float = 1e-10,
    maxit: Optional[int] = None,
    cell_average: str = "midpoint",
) -> CorrectorEntry:
    """Corrector on Q_R with zero Dirichlet data in the given direction."""
    return _solve_corrector(field, R, h, direction, None, tol, maxit, cell_average)


def solve_regularized_corrector(
    field: AnyField,
    R: float,
    T: float,
    h: float,
    direction: int,
    tol: float = 1e-10,
    maxit: Optional[int] = None,
    cell_average: str = "midpoint",
) -> CorrectorEntry:
    """Corrector with the zero-order term T^-2 chi added to the operator."""
    if not T >= 1.0:
        raise ConfigError(f"regularization parameter T must be >= 1, got {T}")
    return _solve_corrector(field, R, h, direction, T, tol, maxit, cell_average)


def solve_corrector_set(
    field: AnyField,
    R: float,
    h: float,
    T: Optional[float] = None,
    tol: float = 1e-10,
    maxit: Optional[int] = None,
    cell_average: str = "midpoint",
) -> CorrectorSet:
    """Both directions on one Q_R mesh (Dirichlet, or regularized when T given)."""
    entries = tuple(
        _solve_corrector(field, R, h, d, T, tol, maxit, cell_average) for d in (0, 1)
    )
    return CorrectorSet(entries[0].chi.mesh, entries, R, T, h)


def cell_gradient(u: GridField) -> tuple[GridField, GridField]:
    """Cell-centered gradient: centered differences inside, one-sided at the rim.

    The one-sided formulas are second order (three-point) so affine fields
    differentiate exactly everywhere, including boundary cells.
    """
    mesh = u.mesh
    if mesh.nx < 2 or mesh.ny < 2:
        raise ConfigError("cell_gradient needs at least 2 cells per axis")
    v = u.values2d()
    gx = np.empty_like(v)
    gy = np.empty_like(v)
    hx, hy = mesh.hx, mesh.hy

    gx[:, 1:-1] = (v[:, 2:] - v[:, :-2]) / (2.0 * hx)
    if mesh.nx >= 3:
        gx[:, 0] = (-3.0 * v[:, 0] + 4.0 * v[:, 1] - v[:, 2]) / (2.0 * hx)
        gx[:, -1] = (3.0 * v[:, -1] - 4.0 * v[:, -2] + v[:, -3]) / (2.0 * hx)
    else:
        gx[:, 0] = gx[:, -1] = (v[:, 1] - v[:, 0]) / hx

    gy[1:-1, :] = (v[2:, :] - v[:-2, :]) / (2.0 * hy)
    if mesh.ny >= 3:
        gy[0, :] = (-3.0 * v[0, :] + 4.0 * v[1, :] - v[2, :]) / (2.0 * hy)
        gy[-1, :] = (3.0 * v[-1, :] - 4.0 * v[-2, :] + v[-3, :]) / (2.0 * hy)
    else:
        gy[0, :] = gy[-1, :] = (v[1, :] - v[0, :]) / hy

    return GridField(mesh, gx.ravel()), GridField(mesh, gy.ravel())


def interpolate_many(field: GridField, points: np.ndarray) -> np.ndarray:
    """Bilinear interpolation from the four surrounding cell centers.

    Exact on bilinear functions.  Beyond the outermost cell centers the
    surrounding-cell weights extrapolate linearly; points farther than one
    cell outside the mesh raise DomainError.
    """
    mesh = field.mesh
    if mesh.nx < 2 or mesh.ny < 2:
        raise ConfigError("interpolation needs at least 2 cells per axis")
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    hx, hy = mesh.hx, mesh.hy
    x_lo, y_lo = mesh.origin
    x_hi, y_hi = x_lo + mesh.extent[0], y_lo + mesh.extent[1]
    out_x = (pts[:, 0] < x_lo - hx) | (pts[:, 0] > x_hi + hx)
    out_y = (pts[:, 1] < y_lo - hy) | (pts[:, 1] > y_hi + hy)
    if np.any(out_x | out_y):
        k = int(np.flatnonzero(out_x | out_y)[0])
        raise DomainError(
            f"point ({pts[k, 0]:g}, {pts[k, 1]:g}) lies more than one cell outside the mesh"
        )
    tx = (pts[:, 0] - (x_lo + 0.5 * hx)) / hx
    ty = (pts[:, 1] - (y_lo + 0.5 * hy)) / hy
    kx = np.clip(np.floor(tx).astype(np.int64), 0, mesh.nx - 2)
    ky = np.clip(np.floor(ty).astype(np.int64), 0, mesh.ny - 2)
    wx = tx - kx
    wy = ty - ky
    v = field.values2d()
    return (
        (1.0 - wx) * (1.0 - wy) * v[ky, kx]
        + wx * (1.0 - wy) * v[ky, kx + 1]
        + (1.0 - wx) * wy * v[ky + 1, kx]
        + wx * wy * v[ky + 1, kx + 1]
    )


def interpolate(field: GridField, point) -> float:
    return float(interpolate_many(field, np.asarray(point, dtype=float).reshape(1, 2))[0])


def mean_gradient_energy(entry: CorrectorEntry) -> float:
    """Volume average of |grad chi|^2 over Q_R (the discrete energy density)."""
    gx, gy = entry.grad
    n = entry.chi.mesh.n_cells
    return float((gx.values @ gx.values + gy.values @ gy.values) / n)
