"""Uniform rectangular control-volume meshes and finite-volume assembly.

Cells are ordered row-major with ix fastest: flat index = iy * nx + ix.  This
ordering is fixed so dumped fields and assembled systems are bit-stable.

The two-point flux scheme couples neighbouring cells through the edge
transmissibility tau = meas(edge) * Ci * Cj / (Ci * di + Cj * dj), where Ci is
the normal component of the cell-averaged coefficient and di the
center-to-edge distance.  On boundary edges tau = meas * Ci / di and the
Dirichlet value enters the right-hand side, which keeps the matrix symmetric
and an M-matrix for diagonal coefficient fields.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .coefficients import AnyField, eval_diagonal, is_diagonal
from .errors import (
    AssemblyError,
    ConfigError,
    MeshMismatchError,
    UnsupportedDiscretizationError,
)
from .linalg import CsrMatrix

SourceLike = Union[None, Callable[[np.ndarray], np.ndarray], np.ndarray]
BoundaryFn = Optional[Callable[[np.ndarray], np.ndarray]]

# tensor-product 3-point Gauss rule on [-1/2, 1/2], used for optional cell averages
_GAUSS3_NODES = np.array([-0.5 * np.sqrt(3.0 / 5.0), 0.0, 0.5 * np.sqrt(3.0 / 5.0)])
_GAUSS3_WEIGHTS = np.array([5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0])


@dataclass(frozen=True)
class StructuredMesh:
    """Uniform rectangular mesh on the box origin + [0, extent]."""

    origin: tuple[float, float]
    extent: tuple[float, float]
    ncells: tuple[int, int]

    @property
    def nx(self) -> int:
        return self.ncells[0]

    @property
    def ny(self) -> int:
        return self.ncells[1]

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny

    @property
    def hx(self) -> float:
        return self.extent[0] / self.nx

    @property
    def hy(self) -> float:
        return self.extent[1] / self.ny

    @property
    def cell_volume(self) -> float:
        return self.hx * self.hy

    def x_centers(self) -> np.ndarray:
        return self.origin[0] + (np.arange(self.nx) + 0.5) * self.hx

    def y_centers(self) -> np.ndarray:
        return self.origin[1] + (np.arange(self.ny) + 0.5) * self.hy

    def cell_centers(self) -> np.ndarray:
        """All cell centers as an (n_cells, 2) array in flat-index order."""
        gx, gy = np.meshgrid(self.x_centers(), self.y_centers(), indexing="xy")
        return np.column_stack([gx.ravel(), gy.ravel()])

    def cell_index(self, ix: int, iy: int) -> int:
        return iy * self.nx + ix

    def interior_edge_count(self) -> int:
        return (self.nx - 1) * self.ny + self.nx * (self.ny - 1)


def build_uniform_mesh(origin, extent, ncells) -> StructuredMesh:
    origin = (float(origin[0]), float(origin[1]))
    extent = (float(extent[0]), float(extent[1]))
    ncells = (int(ncells[0]), int(ncells[1]))
    if extent[0] <= 0.0 or extent[1] <= 0.0:
        raise ConfigError(f"mesh extent must be positive, got {extent}")
    if ncells[0] < 1 or ncells[1] < 1:
        raise ConfigError(f"cell counts must be >= 1, got {ncells}")
    return StructuredMesh(origin, extent, ncells)


def meshes_compatible(a: StructuredMesh, b: StructuredMesh, tol: float = 1e-12) -> bool:
    return (
        a.ncells == b.ncells
        and np.allclose(a.origin, b.origin, rtol=0.0, atol=tol)
        and np.allclose(a.extent, b.extent, rtol=tol, atol=tol)
    )


@dataclass
class GridField:
    """Cell-centered scalar field; one value per cell in flat-index order."""

    mesh: StructuredMesh
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.mesh.n_cells,):
            raise MeshMismatchError(
                f"field has {self.values.shape} values for {self.mesh.n_cells} cells"
            )

    def values2d(self) -> np.ndarray:
        """View shaped (ny, nx); element [iy, ix]."""
        return self.values.reshape(self.mesh.ny, self.mesh.nx)


@dataclass(frozen=True)
class SparseSystem:
    matrix: CsrMatrix
    rhs: np.ndarray


def interior_edge_pairs(mesh: StructuredMesh) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Flat cell indices (i, j) of every interior edge and its normal axis (0 or 1)."""
    nx, ny = mesh.nx, mesh.ny
    iy, ix = np.meshgrid(np.arange(ny), np.arange(nx - 1), indexing="ij")
    ex_i = (iy * nx + ix).ravel()
    ex_j = ex_i + 1
    iy, ix = np.meshgrid(np.arange(ny - 1), np.arange(nx), indexing="ij")
    ey_i = (iy * nx + ix).ravel()
    ey_j = ey_i + nx
    i = np.concatenate([ex_i, ey_i])
    j = np.concatenate([ex_j, ey_j])
    axis = np.concatenate([np.zeros(ex_i.size, dtype=np.int64), np.ones(ey_i.size, dtype=np.int64)])
    return i, j, axis


def _boundary_cells(mesh: StructuredMesh, side: str) -> tuple[np.ndarray, np.ndarray]:
    """Flat indices of cells on one boundary side and the edge midpoints there."""
    nx, ny = mesh.nx, mesh.ny
    x0, y0 = mesh.origin
    ex, ey = mesh.extent
    if side == "left":
        cells = np.arange(ny) * nx
        pts = np.column_stack([np.full(ny, x0), mesh.y_centers()])
    elif side == "right":
        cells = np.arange(ny) * nx + (nx - 1)
        pts = np.column_stack([np.full(ny, x0 + ex), mesh.y_centers()])
    elif side == "bottom":
        cells = np.arange(nx)
        pts = np.column_stack([mesh.x_centers(), np.full(nx, y0)])
    elif side == "top":
        cells = (ny - 1) * nx + np.arange(nx)
        pts = np.column_stack([mesh.x_centers(), np.full(nx, y0 + ey)])
    else:
        raise ConfigError(f"unknown boundary side {side!r}")
    return cells, pts


def cell_coefficient_samples(
    mesh: StructuredMesh, field: AnyField, cell_average: str = "midpoint"
) -> tuple[np.ndarray, np.ndarray]:
    """Per-cell (a11, a22) cell averages of a diagonal field.

    ``midpoint`` evaluates at cell centers; ``gauss3`` uses a tensor-product
    3x3 Gauss rule, both second-order accurate for the flux scheme.
    """
    if not is_diagonal(field):
        raise UnsupportedDiscretizationError(
            "two-point flux assembly needs a diagonal coefficient field"
        )
    centers = mesh.cell_centers()
    if cell_average == "midpoint":
        return eval_diagonal(field, centers)
    if cell_average == "gauss3":
        a11 = np.zeros(mesh.n_cells)
        a22 = np.zeros(mesh.n_cells)
        for gx, wx in zip(_GAUSS3_NODES, _GAUSS3_WEIGHTS):
            for gy, wy in zip(_GAUSS3_NODES, _GAUSS3_WEIGHTS):
                pts = centers + np.array([gx * mesh.hx, gy * mesh.hy])
                s11, s22 = eval_diagonal(field, pts)
                a11 += wx * wy * s11
                a22 += wx * wy * s22
        return a11, a22
    raise ConfigError(f"unknown cell_average rule {cell_average!r}")


def _check_positive(samples: np.ndarray, mesh: StructuredMesh, which: str) -> None:
    bad = np.flatnonzero(samples <= 0.0)
    if bad.size:
        i = int(bad[0])
        raise AssemblyError(
            f"nonpositive {which} coefficient {samples[i]:g} in cell {i} "
            f"(ix={i % mesh.nx}, iy={i // mesh.nx})"
        )


def _interior_taus(
    mesh: StructuredMesh, a11: np.ndarray, a22: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """(i, j, tau) arrays over all interior edges plus the edge axis array."""
    i, j, axis = interior_edge_pairs(mesh)
    cn = np.where(axis == 0, a11[i], a22[i])
    cj = np.where(axis == 0, a11[j], a22[j])
    meas = np.where(axis == 0, mesh.hy, mesh.hx)
    half = np.where(axis == 0, 0.5 * mesh.hx, 0.5 * mesh.hy)
    tau = meas * cn * cj / (cn * half + cj * half)
    return i, j, tau, axis


def transmissibility(
    mesh: StructuredMesh, field: AnyField, i: int, j: int, cell_average: str = "midpoint"
) -> float:
    """Transmissibility of the interior edge between adjacent cells i and j."""
    if j < i:
        i, j = j, i
    d = j - i
    if d == 1 and (i % mesh.nx) != mesh.nx - 1:
        axis = 0
    elif d == mesh.nx:
        axis = 1
    else:
        raise ConfigError(f"cells {i} and {j} do not share an interior edge")
    a11, a22 = cell_coefficient_samples(mesh, field, cell_average)
    ci, cj = (a11[i], a11[j]) if axis == 0 else (a22[i], a22[j])
    for c, cell in ((ci, i), (cj, j)):
        if c <= 0.0:
            raise AssemblyError(f"nonpositive coefficient {c:g} in cell {cell}")
    meas = mesh.hy if axis == 0 else mesh.hx
    half = 0.5 * (mesh.hx if axis == 0 else mesh.hy)
    return float(meas * ci * cj / (ci * half + cj * half))


def boundary_transmissibility(
    mesh: StructuredMesh, field: AnyField, i: int, side: str, cell_average: str = "midpoint"
) -> float:
    """Boundary-edge transmissibility meas * C / d with d the half cell size."""
    a11, a22 = cell_coefficient_samples(mesh, field, cell_average)
    if side in ("left", "right"):
        c, meas, half = a11[i], mesh.hy, 0.5 * mesh.hx
    elif side in ("bottom", "top"):
        c, meas, half = a22[i], mesh.hx, 0.5 * mesh.hy
    else:
        raise ConfigError(f"unknown boundary side {side!r}")
    if c <= 0.0:
        raise AssemblyError(f"nonpositive coefficient {c:g} in cell {i}")
    return float(meas * c / half)


def _integrated_source(mesh: StructuredMesh, source: SourceLike) -> np.ndarray:
    """Per-cell integral of the source (midpoint rule), or a raw per-cell vector."""
    if source is None:
        return np.zeros(mesh.n_cells)
    if callable(source):
        vals = np.asarray(source(mesh.cell_centers()), dtype=float)
        if vals.shape != (mesh.n_cells,):
            raise ConfigError("source callable must return one value per cell")
        return vals * mesh.cell_volume
    vals = np.asarray(source, dtype=float)
    if vals.shape != (mesh.n_cells,):
        raise ConfigError("per-cell source vector has the wrong length")
    return vals


def _assemble_from_samples(
    mesh: StructuredMesh,
    a11: np.ndarray,
    a22: np.ndarray,
    dirichlet: BoundaryFn,
    source: SourceLike,
) -> tuple[list[np.ndarray], list[np.ndarray], list[np.ndarray], np.ndarray]:
    """Shared five-point assembly; returns COO triplet lists and the rhs."""
    _check_positive(a11, mesh, "a11")
    _check_positive(a22, mesh, "a22")
    i, j, tau, _ = _interior_taus(mesh, a11, a22)

    rows = [i, j, i, j]
    cols = [i, j, j, i]
    vals = [tau, tau, -tau, -tau]

    rhs = _integrated_source(mesh, source)
    for side in ("left", "right", "bottom", "top"):
        cells, pts = _boundary_cells(mesh, side)
        if side in ("left", "right"):
            tau_b = mesh.hy * a11[cells] / (0.5 * mesh.hx)
        else:
            tau_b = mesh.hx * a22[cells] / (0.5 * mesh.hy)
        rows.append(cells)
        cols.append(cells)
        vals.append(tau_b)
        if dirichlet is not None:
            g = np.asarray(dirichlet(pts), dtype=float)
            np.add.at(rhs, cells, tau_b * g)
    return rows, cols, vals, rhs


def assemble_tpfa(
    mesh: StructuredMesh,
    field: AnyField,
    dirichlet: BoundaryFn = None,
    source: SourceLike = None,
    cell_average: str = "midpoint",
) -> SparseSystem:
    """Five-point two-point-flux system for -div(A grad u) = f, Dirichlet data.

    ``dirichlet`` maps boundary points (n, 2) to values (None means zero).
    ``source`` is either a pointwise callable (integrated by midpoint times
    cell volume) or a per-cell vector of already-integrated values.
    """
    a11, a22 = cell_coefficient_samples(mesh, field, cell_average)
    rows, cols, vals, rhs = _assemble_from_samples(mesh, a11, a22, dirichlet, source)
    matrix = CsrMatrix.from_coo(
        mesh.n_cells, np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
    )
    return SparseSystem(matrix, rhs)


def _cross_term_triplets(
    mesh: StructuredMesh, m12: float, dirichlet: BoundaryFn
) -> tuple[list, list, list, np.ndarray]:
    """Corner-difference discretization of the mixed term -2*m12*u_xy.

    Interior cells use the centered four-corner stencil.  Cells on the
    boundary ring eliminate outside corners through the Dirichlet data by
    linear reflection, which keeps the stencil exact on bilinear functions.
    """
    nx, ny = mesh.nx, mesh.ny
    x0, y0 = mesh.origin
    xs, ys = mesh.x_centers(), mesh.y_centers()
    x_lo, x_hi = x0, x0 + mesh.extent[0]
    y_lo, y_hi = y0, y0 + mesh.extent[1]
    c = 0.5 * m12  # stencil weight: -2*m12 * vol / (4 hx hy) = -m12/2 per corner

    def g(px: float, py: float) -> float:
        if dirichlet is None:
            return 0.0
        return float(np.asarray(dirichlet(np.array([[px, py]])))[0])

    rows: list[int] = []
    cols: list[int] = []
    vals: list[float] = []
    rhs = np.zeros(mesh.n_cells)

    # fully interior cells, vectorized
    if nx > 2 and ny > 2:
        iy, ix = np.meshgrid(np.arange(1, ny - 1), np.arange(1, nx - 1), indexing="ij")
        base = (iy * nx + ix).ravel()
        for dx, dy in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
            s = dx * dy
            corner = base + dy * nx + dx
            rows.append(base)
            cols.append(corner)
            vals.append(np.full(base.size, -c * s))

    # boundary ring, cell by cell (O(perimeter) work)
    ring = [(ix, iy) for iy in range(ny) for ix in range(nx)
            if ix == 0 or ix == nx - 1 or iy == 0 or iy == ny - 1]
    srows: list[int] = []
    scols: list[int] = []
    svals: list[float] = []
    for ix, iy in ring:
        i = iy * nx + ix
        for dx, dy in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
            s = dx * dy
            cx, cy = ix + dx, iy + dy
            in_x = 0 <= cx < nx
            in_y = 0 <= cy < ny
            if in_x and in_y:
                srows.append(i)
                scols.append(cy * nx + cx)
                svals.append(-c * s)
            elif in_y:  # ghost across a vertical boundary face
                bx = x_lo if cx < 0 else x_hi
                srows.append(i)
                scols.append(cy * nx + ix)
                svals.append(c * s)
                rhs[i] += m12 * s * g(bx, ys[cy])
            elif in_x:  # ghost across a horizontal boundary face
                by = y_lo if cy < 0 else y_hi
                srows.append(i)
                scols.append(iy * nx + cx)
                svals.append(c * s)
                rhs[i] += m12 * s * g(xs[cx], by)
            else:  # ghost beyond a domain corner
                bx = x_lo if cx < 0 else x_hi
                by = y_lo if cy < 0 else y_hi
                srows.append(i)
                scols.append(i)
                svals.append(-c * s)
                rhs[i] += m12 * s * (2.0 * g(bx, by) - g(bx, ys[iy]) - g(xs[ix], by))
    rows.append(np.asarray(srows, dtype=np.int64))
    cols.append(np.asarray(scols, dtype=np.int64))
    vals.append(np.asarray(svals, dtype=float))
    return rows, cols, vals, rhs


def assemble_const_full(
    mesh: StructuredMesh,
    m: np.ndarray,
    dirichlet: BoundaryFn = None,
    source: SourceLike = None,
) -> SparseSystem:
    """Nine-point system for a constant symmetric positive definite matrix.

    The diagonal part reuses the five-point scheme; the mixed term is the
    centered corner difference.  Small asymmetries in ``m`` (e.g. assembled
    effective matrices) are averaged away; the symmetrized matrix must be
    positive definite.  With m12 = 0 the result is bit-identical to
    ``assemble_tpfa`` on the equivalent constant diagonal field.
    """
    m = np.asarray(m, dtype=float)
    if m.shape != (2, 2):
        raise ConfigError(f"matrix must be 2x2, got {m.shape}")
    if np.linalg.eigvalsh(0.5 * (m + m.T)).min() <= 0.0:
        raise ConfigError("matrix must be symmetric positive definite")

    a11 = np.full(mesh.n_cells, m[0, 0])
    a22 = np.full(mesh.n_cells, m[1, 1])
    rows, cols, vals, rhs = _assemble_from_samples(mesh, a11, a22, dirichlet, source)
    m12 = 0.5 * (m[0, 1] + m[1, 0])
    if m12 != 0.0:
        crows, ccols, cvals, crhs = _cross_term_triplets(mesh, m12, dirichlet)
        rows.extend(crows)
        cols.extend(ccols)
        vals.extend(cvals)
        rhs = rhs + crhs
    matrix = CsrMatrix.from_coo(
        mesh.n_cells, np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
    )
    return SparseSystem(matrix, rhs)


def interior_edge_fluxes(
    mesh: StructuredMesh, field: AnyField, u: GridField, cell_average: str = "midpoint"
) -> tuple[np.ndarray, np.ndarray]:
    """Per-edge fluxes (F_from_i, F_from_j) = (tau*(u_i-u_j), tau*(u_j-u_i))."""
    if not meshes_compatible(mesh, u.mesh):
        raise MeshMismatchError("field lives on a different mesh")
    a11, a22 = cell_coefficient_samples(mesh, field, cell_average)
    _check_positive(a11, mesh, "a11")
    _check_positive(a22, mesh, "a22")
    i, j, tau, _ = _interior_taus(mesh, a11, a22)
    fi = tau * (u.values[i] - u.values[j])
    fj = tau * (u.values[j] - u.values[i])
    return fi, fj


def discrete_norms(
    mesh: StructuredMesh,
    u: GridField,
    reference_gradient: Optional[tuple[GridField, GridField]] = None,
    boundary_values: BoundaryFn = None,
) -> dict[str, float]:
    """Discrete L2 / H1 / H2 norms of a cell field.

    The H1 seminorm is the edge-difference form sum(meas/d * (u_j - u_i)^2)
    over interior edges; boundary edges contribute (u_i - g)^2 terms when
    ``boundary_values`` is given.  If ``reference_gradient`` is supplied, the
    seminorm instead integrates that gradient field (midpoint rule).  The H2
    part adds centered second differences per axis plus twice the mixed
    difference, evaluated where the centered stencils fit.
    """
    if not meshes_compatible(mesh, u.mesh):
        raise MeshMismatchError("field lives on a different mesh")
    vol = mesh.cell_volume
    vals = u.values
    l2_sq = vol * float(vals @ vals)

    if reference_gradient is not None:
        gx, gy = reference_gradient
        if not (meshes_compatible(mesh, gx.mesh) and meshes_compatible(mesh, gy.mesh)):
            raise MeshMismatchError("gradient fields live on a different mesh")
        semi_sq = vol * float(gx.values @ gx.values + gy.values @ gy.values)
    else:
        i, j, axis = interior_edge_pairs(mesh)
        du = vals[j] - vals[i]
        w = np.where(axis == 0, mesh.hy / mesh.hx, mesh.hx / mesh.hy)
        semi_sq = float(np.sum(w * du * du))
        if boundary_values is not None:
            for side in ("left", "right", "bottom", "top"):
                cells, pts = _boundary_cells(mesh, side)
                g = np.asarray(boundary_values(pts), dtype=float)
                w_b = mesh.hy / (0.5 * mesh.hx) if side in ("left", "right") else mesh.hx / (0.5 * mesh.hy)
                d = vals[cells] - g
                semi_sq += float(np.sum(w_b * d * d))

    h1_sq = l2_sq + semi_sq

    v2 = u.values2d()
    h2_sq = h1_sq
    if mesh.nx >= 3:
        dxx = (v2[:, 2:] - 2.0 * v2[:, 1:-1] + v2[:, :-2]) / mesh.hx**2
        h2_sq += vol * float(np.sum(dxx * dxx))
    if mesh.ny >= 3:
        dyy = (v2[2:, :] - 2.0 * v2[1:-1, :] + v2[:-2, :]) / mesh.hy**2
        h2_sq += vol * float(np.sum(dyy * dyy))
    if mesh.nx >= 3 and mesh.ny >= 3:
        dxy = (v2[2:, 2:] - v2[:-2, 2:] - v2[2:, :-2] + v2[:-2, :-2]) / (4.0 * mesh.hx * mesh.hy)
        h2_sq += 2.0 * vol * float(np.sum(dxy * dxy))

    return {"l2": float(np.sqrt(l2_sq)), "h1": float(np.sqrt(h1_sq)), "h2": float(np.sqrt(h2_sq))}


def dump_grid(field: GridField, path) -> None:
    """Write the plain-text dump: header ``nx ny x0 y0 hx hy``, one value per line."""
    m = field.mesh
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"{m.nx} {m.ny} {m.origin[0]:.17g} {m.origin[1]:.17g} {m.hx:.17g} {m.hy:.17g}\n")
        for v in field.values:
            fh.write(f"{v:.17g}\n")


def load_grid(path) -> GridField:
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().split()
        if len(header) != 6:
            raise ConfigError(f"malformed grid header in {path}")
        nx, ny = int(header[0]), int(header[1])
        x0, y0, hx, hy = (float(t) for t in header[2:])
        values = np.array([float(line) for line in fh if line.strip()])
    mesh = StructuredMesh((x0, y0), (nx * hx, ny * hy), (nx, ny))
    return GridField(mesh, values)
