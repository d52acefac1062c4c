"""End-to-end first-order approximation experiment.

For a fixed oscillation scale eps the study solves the oscillating problem,
builds correctors and the effective matrix on Q_R, solves the homogenized
problem, forms the corrected field v = u0 + eps * chi(x/eps) . grad u0, and
reports the relative discrete error

    err = || u_eps - v ||_H1  /  || u0 ||_H2 .
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np

from .coefficients import (
    AnyField,
    EpsilonScaled,
    field_to_dict,
    is_diagonal,
    is_unit_periodic,
)
from .corrector import (
    CorrectorSet,
    cell_gradient,
    corrector_mesh,
    interpolate_many,
    solve_corrector_set,
)
from .errors import ConfigError, FactorizationError, FvhomError, MeshMismatchError, SolveError
from .homogenize import EffectiveMatrix, effective_matrix_from_set
from .linalg import SolveReport, bicgstab, ilu0
from .mesh import (
    GridField,
    StructuredMesh,
    assemble_const_full,
    assemble_tpfa,
    build_uniform_mesh,
    discrete_norms,
    dump_grid,
    meshes_compatible,
)

Box = tuple[tuple[float, float], tuple[float, float]]


def box_mesh(omega: Box, h: float) -> StructuredMesh:
    """Mesh of the box ((x0, y0), (ex, ey)); h must divide both extents."""
    origin, extent = omega
    cells = []
    for e in extent:
        n = e / h
        if abs(n - round(n)) > 1e-9 * max(1.0, n):
            raise ConfigError(f"h={h} does not divide the box extent {e} evenly")
        cells.append(int(round(n)))
    return build_uniform_mesh(origin, extent, (cells[0], cells[1]))


def _solve_system(matrix, rhs, tol: float, maxit: Optional[int]) -> tuple[np.ndarray, SolveReport]:
    x, report = bicgstab(matrix, rhs, precond=ilu0(matrix), tol=tol, maxit=maxit)
    if not report.converged:
        raise SolveError(
            f"linear solve did not converge: rel. residual "
            f"{report.final_relative_residual:.3e} after {report.iterations} iterations",
            report=report,
        )
    return x, report


def _oscillating_solution(
    fld: AnyField,
    eps: float,
    f: Callable[[np.ndarray], np.ndarray],
    omega: Box,
    h: float,
    tol: float = 1e-10,
    maxit: Optional[int] = None,
    cell_average: str = "midpoint",
) -> tuple[GridField, SolveReport]:
    mesh = box_mesh(omega, h)
    system = assemble_tpfa(mesh, EpsilonScaled(fld, eps), None, f, cell_average)
    x, report = _solve_system(system.matrix, system.rhs, tol, maxit)
    return GridField(mesh, x), report


def solve_oscillating(
    fld: AnyField,
    eps: float,
    f: Callable[[np.ndarray], np.ndarray],
    omega: Box,
    h: float,
    tol: float = 1e-10,
    maxit: Optional[int] = None,
    cell_average: str = "midpoint",
) -> GridField:
    """Zero-Dirichlet solve of -div(A(x/eps) grad u) = f on the box."""
    return _oscillating_solution(fld, eps, f, omega, h, tol, maxit, cell_average)[0]


def _homogenized_solution(
    a_star: EffectiveMatrix,
    f: Callable[[np.ndarray], np.ndarray],
    omega: Box,
    h: float,
    tol: float = 1e-10,
    maxit: Optional[int] = None,
) -> tuple[GridField, SolveReport]:
    mesh = box_mesh(omega, h)
    m = 0.5 * (a_star.m + a_star.m.T)
    system = assemble_const_full(mesh, m, None, f)
    x, report = _solve_system(system.matrix, system.rhs, tol, maxit)
    return GridField(mesh, x), report


def solve_homogenized(
    a_star: EffectiveMatrix,
    f: Callable[[np.ndarray], np.ndarray],
    omega: Box,
    h: float,
    tol: float = 1e-10,
    maxit: Optional[int] = None,
) -> GridField:
    """Zero-Dirichlet solve with the (symmetrized) constant effective matrix."""
    return _homogenized_solution(a_star, f, omega, h, tol, maxit)[0]


def first_order_approx(
    u0: GridField,
    u0_grad: tuple[GridField, GridField],
    correctors: CorrectorSet,
    eps: float,
    wrap: Optional[str] = None,
) -> GridField:
    """Corrected field u0(x) + eps * sum_j chi_j(x/eps) * d_j u0(x).

    ``wrap="periodic"`` folds the fast variable into the central unit cell,
    which is valid only for unit-periodic coefficient fields; otherwise the
    corrector domain must cover omega/eps (violations raise DomainError).
    """
    mesh = u0.mesh
    gx, gy = u0_grad
    if not (meshes_compatible(mesh, gx.mesh) and meshes_compatible(mesh, gy.mesh)):
        raise MeshMismatchError("gradient fields live on a different mesh")
    y = mesh.cell_centers() / eps
    if wrap == "periodic":
        y = y - np.round(y)
    elif wrap is not None:
        raise ConfigError(f"unknown wrap mode {wrap!r}")
    chi1 = interpolate_many(correctors.chi(0), y)
    chi2 = interpolate_many(correctors.chi(1), y)
    values = u0.values + eps * (chi1 * gx.values + chi2 * gy.values)
    return GridField(mesh, values)


@dataclass
class ErrRow:
    """One row of the error table: err = h1_diff / h2_u0."""

    eps: float
    err: float
    h1_diff: float
    h2_u0: float


def _zero_bc(pts: np.ndarray) -> np.ndarray:
    return np.zeros(pts.shape[0])


def err_epsilon(u_eps: GridField, v_eps: GridField, u0: GridField, eps: float = float("nan")) -> ErrRow:
    """Relative discrete error of the corrected field against the fine solve.

    Both norms are the zero-boundary discrete norms (boundary edges included
    with datum 0, the natural norms for this homogeneous Dirichlet
    experiment); the corrected field's nonzero boundary trace therefore
    contributes its boundary-layer mismatch to the numerator.
    """
    mesh = u_eps.mesh
    if not (meshes_compatible(mesh, v_eps.mesh) and meshes_compatible(mesh, u0.mesh)):
        raise MeshMismatchError("error evaluation needs all fields on one mesh")
    diff = GridField(mesh, u_eps.values - v_eps.values)
    h1_diff = discrete_norms(mesh, diff, boundary_values=_zero_bc)["h1"]
    h2_u0 = discrete_norms(mesh, u0, boundary_values=_zero_bc)["h2"]
    return ErrRow(eps, h1_diff / h2_u0, h1_diff, h2_u0)


def _err_epsilon_gradient_mode(
    u_eps: GridField,
    v_eps: GridField,
    u0: GridField,
    u0_grad: tuple[GridField, GridField],
    correctors: CorrectorSet,
    eps: float,
    wrap: Optional[str],
) -> ErrRow:
    """Sensitivity variant: H1 misfit from interpolated corrector gradients.

    grad v is approximated by grad u0 + sum_j [grad chi_j](x/eps) * d_j u0,
    dropping the eps-weighted Hessian term of the product rule.
    """
    mesh = u_eps.mesh
    y = mesh.cell_centers() / eps
    if wrap == "periodic":
        y = y - np.round(y)
    gvx = u0_grad[0].values.copy()
    gvy = u0_grad[1].values.copy()
    for j in (0, 1):
        cgx, cgy = correctors.grad(j)
        dju0 = u0_grad[j].values
        gvx += interpolate_many(cgx, y) * dju0
        gvy += interpolate_many(cgy, y) * dju0
    ugx, ugy = cell_gradient(u_eps)
    diff = GridField(mesh, u_eps.values - v_eps.values)
    ref = (GridField(mesh, ugx.values - gvx), GridField(mesh, ugy.values - gvy))
    h1_diff = discrete_norms(mesh, diff, reference_gradient=ref)["h1"]
    h2_u0 = discrete_norms(mesh, u0)["h2"]
    return ErrRow(eps, h1_diff / h2_u0, h1_diff, h2_u0)


def source_callable(spec: dict) -> Callable[[np.ndarray], np.ndarray]:
    """Build the source term from its declarative description.

    Kinds: ``constant`` (value), ``cos_product`` / ``sin_product``
    (amplitude * trig(f1 * x1) * trig(f2 * x2)).
    """
    kind = spec.get("kind")
    if kind == "constant":
        value = float(spec.get("value", 1.0))
        return lambda pts: np.full(pts.shape[0], value)
    if kind in ("cos_product", "sin_product"):
        amp = float(spec.get("amplitude", 1.0))
        f1, f2 = (float(v) for v in spec["frequency"])
        trig = np.cos if kind == "cos_product" else np.sin
        return lambda pts: amp * trig(f1 * pts[:, 0]) * trig(f2 * pts[:, 1])
    raise ConfigError(f"unknown source kind {spec.get('kind')!r}")


@dataclass
class ExperimentConfig:
    """Everything a first-order approximation study needs."""

    field: AnyField
    field_name: str
    omega: Box
    eps_inverses: tuple[int, ...]
    h: float
    R: float
    h_corr: float
    source_spec: dict = dc_field(default_factory=lambda: {"kind": "constant", "value": 1.0})
    T: Optional[float] = None
    solver_tol: float = 1e-10
    solver_maxit: Optional[int] = None
    cell_average: str = "midpoint"
    wrap: Optional[str] = None
    gradient_mode: str = "interpolate_chi"
    output_dir: Optional[str] = None

    def validate(self) -> None:
        if not is_diagonal(self.field):
            raise ConfigError("study fields must be diagonal")
        if not self.eps_inverses:
            raise ConfigError("need at least one eps value")
        for n in self.eps_inverses:
            if int(n) != n or n < 1:
                raise ConfigError(f"eps must be 1/N with integer N >= 1, got N={n}")
        if self.gradient_mode not in ("interpolate_chi", "interpolate_grad_chi"):
            raise ConfigError(f"unknown gradient_mode {self.gradient_mode!r}")
        box_mesh(self.omega, self.h)  # raises on bad h
        corrector_mesh(self.R, self.h_corr)
        if self.wrap == "periodic":
            if not is_unit_periodic(self.field):
                raise ConfigError("periodic wrapping needs a unit-periodic field")
        else:
            origin, extent = self.omega
            corners = (
                abs(origin[0]),
                abs(origin[1]),
                abs(origin[0] + extent[0]),
                abs(origin[1] + extent[1]),
            )
            needed = max(self.eps_inverses) * max(corners)
            if self.R + 1e-12 < needed:
                raise ConfigError(
                    f"corrector domain too small: need R >= {needed:g} so that "
                    f"omega/eps stays inside Q_R (got R={self.R:g}); enlarge R or "
                    "enable periodic wrapping for unit-periodic fields"
                )

    def to_dict(self) -> dict:
        return {
            "field": field_to_dict(self.field) if not isinstance(self.field, EpsilonScaled) else None,
            "field_name": self.field_name,
            "omega": {"origin": list(self.omega[0]), "extent": list(self.omega[1])},
            "eps_inverses": list(self.eps_inverses),
            "h": self.h,
            "R": self.R,
            "h_corr": self.h_corr,
            "T": self.T,
            "source": self.source_spec,
            "solver_tol": self.solver_tol,
            "solver_maxit": self.solver_maxit,
            "cell_average": self.cell_average,
            "wrap": self.wrap,
            "gradient_mode": self.gradient_mode,
        }


@dataclass
class StudyResult:
    rows: list[ErrRow]
    a_star: EffectiveMatrix
    correctors: CorrectorSet
    u0: GridField
    reports: dict
    timings: dict


def run_study(config: ExperimentConfig, out_dir=None, deterministic: bool = False) -> StudyResult:
    """Run the full pipeline; writes artifacts when an output directory is set.

    Stages: per-eps fine solves of the oscillating problem, one corrector set
    on Q_R, the effective matrix, the homogenized solve, then the corrected
    fields and error rows.  Any stage failure raises with the stage name.
    ``deterministic`` drops wall-clock timings from meta.json so repeated runs
    produce byte-identical artifacts.
    """
    config.validate()
    f = source_callable(config.source_spec)
    timings: dict[str, float] = {}
    reports: dict[str, dict] = {}

    def staged(name, fn):
        t0 = time.perf_counter()
        try:
            result = fn()
        except FvhomError as exc:
            msg = f"stage '{name}' failed: {exc}"
            if isinstance(exc, SolveError):
                raise SolveError(msg, report=exc.report) from exc
            if isinstance(exc, FactorizationError):
                raise FactorizationError(msg, row=exc.row) from exc
            raise type(exc)(msg) from exc
        timings[name] = time.perf_counter() - t0
        return result

    correctors = staged(
        "correctors",
        lambda: solve_corrector_set(
            config.field, config.R, config.h_corr, config.T,
            config.solver_tol, config.solver_maxit, config.cell_average,
        ),
    )
    for entry in correctors.entries:
        reports[f"corrector_{entry.direction + 1}"] = entry.report.to_dict()

    a_star = staged(
        "effective_matrix",
        lambda: effective_matrix_from_set(config.field, correctors, config.cell_average),
    )

    u0, rep = staged(
        "homogenized_solve",
        lambda: _homogenized_solution(
            a_star, f, config.omega, config.h, config.solver_tol, config.solver_maxit
        ),
    )
    reports["homogenized"] = rep.to_dict()
    u0_grad = cell_gradient(u0)

    rows: list[ErrRow] = []
    per_eps_fields = []
    for n in config.eps_inverses:
        eps = 1.0 / n
        u_eps, rep = staged(
            f"oscillating_solve_N{n}",
            lambda: _oscillating_solution(
                config.field, eps, f, config.omega, config.h,
                config.solver_tol, config.solver_maxit, config.cell_average,
            ),
        )
        reports[f"oscillating_N{n}"] = rep.to_dict()
        v_eps = staged(
            f"first_order_N{n}",
            lambda: first_order_approx(u0, u0_grad, correctors, eps, config.wrap),
        )
        if config.gradient_mode == "interpolate_grad_chi":
            row = _err_epsilon_gradient_mode(
                u_eps, v_eps, u0, u0_grad, correctors, eps, config.wrap
            )
        else:
            row = err_epsilon(u_eps, v_eps, u0, eps)
        rows.append(row)
        per_eps_fields.append((n, u_eps, v_eps))

    result = StudyResult(rows, a_star, correctors, u0, reports, timings)
    target = out_dir if out_dir is not None else config.output_dir
    if target is not None:
        _write_study_artifacts(config, result, per_eps_fields, target, deterministic)
    return result


def _write_study_artifacts(
    config: ExperimentConfig, result: StudyResult, per_eps, out_dir, deterministic: bool = False
) -> None:
    os.makedirs(out_dir, exist_ok=True)
    blob = json.dumps(config.to_dict(), sort_keys=True).encode()
    config_hash = hashlib.sha256(blob).hexdigest()[:16]

    with open(os.path.join(out_dir, "study.csv"), "w", encoding="ascii") as fh:
        fh.write(f"# config={config_hash}\n")
        fh.write("inv_eps,eps,err,h1_diff,h2_u0\n")
        for n, row in zip(config.eps_inverses, result.rows):
            fh.write(
                f"{n},{row.eps:.17g},{row.err:.17g},{row.h1_diff:.17g},{row.h2_u0:.17g}\n"
            )

    m = result.a_star.m
    with open(os.path.join(out_dir, "a_star.csv"), "w", encoding="ascii") as fh:
        fh.write(f"# config={config_hash}\n")
        fh.write("m11,m12,m21,m22\n")
        fh.write(f"{m[0, 0]:.17g},{m[0, 1]:.17g},{m[1, 0]:.17g},{m[1, 1]:.17g}\n")

    dump_grid(result.u0, os.path.join(out_dir, "u0.grid"))
    for n, u_eps, v_eps in per_eps:
        dump_grid(u_eps, os.path.join(out_dir, f"u_eps_N{n}.grid"))
        dump_grid(v_eps, os.path.join(out_dir, f"v_eps_N{n}.grid"))

    meta = {
        "config": config.to_dict(),
        "config_hash": config_hash,
        "a_star": m.tolist(),
        "a_star_asymmetry": result.a_star.asymmetry(),
        "reports": result.reports,
        # wall-clock numbers would break byte-identical reruns
        "timings_seconds": None if deterministic else result.timings,
    }
    with open(os.path.join(out_dir, "meta.json"), "w", encoding="ascii") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
