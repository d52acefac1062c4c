"""Command-line front end: corrector / homogenize / study / solve / selftest.

Configuration comes from an optional JSON file (nested sections) merged with
command-line flags; flags win.  All numeric output uses 17 significant
digits and CSV files carry the configuration hash as a leading comment.

Exit codes: 0 success, 2 configuration error, 3 solver/selftest failure,
4 I/O error.  The FVHOM_OUT environment variable overrides the default
output directory (explicit --out wins over it).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from typing import Optional

import numpy as np

from . import coefficients, corrector, fo_approx, homogenize, linalg, mesh
from .errors import ConfigError, FactorizationError, FvhomError, SolveError


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def read_table(path) -> tuple[list[str], list[list[str]]]:
    """Read a CSV written by this tool: '#' comments, header, string cells."""
    header: Optional[list[str]] = None
    rows: list[list[str]] = []
    with open(path, "r", encoding="ascii") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            cells = line.split(",")
            if header is None:
                header = cells
            else:
                rows.append(cells)
    if header is None:
        raise ConfigError(f"{path} contains no table")
    return header, rows


def parse_config(text: str) -> dict:
    """Parse and normalize the JSON configuration text."""
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg


def serialize_config(cfg: dict) -> str:
    return json.dumps(cfg, indent=2, sort_keys=True) + "\n"


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()[:16]


def _load_config_file(path: Optional[str]) -> dict:
    if path is None:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def _merged(cfg: dict, section: str, key: str, flag_value, default=None):
    """Precedence: explicit flag > config[section][key] (or config[key]) > default."""
    if flag_value is not None:
        return flag_value
    node = cfg.get(section, {}) if section else cfg
    if isinstance(node, dict) and key in node and node[key] is not None:
        return node[key]
    if section and key in cfg and cfg[key] is not None:
        return cfg[key]
    return default


def _resolve_field(cfg: dict, args) -> tuple[coefficients.MatrixField, str]:
    if getattr(args, "builtin", None):
        return coefficients.builtin(args.builtin), args.builtin
    spec = cfg.get("field")
    if spec is None:
        raise ConfigError("no coefficient field given (use --builtin or a config 'field' entry)")
    name = spec.get("builtin", "custom") if isinstance(spec, dict) else "custom"
    return coefficients.field_from_dict(spec), str(name)


def _resolve_out(cfg: dict, args) -> str:
    if getattr(args, "out", None):
        return args.out
    env = os.environ.get("FVHOM_OUT")
    if env:
        return env
    return str(cfg.get("output", "fvhom_out"))


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise ConfigError(f"expected a comma-separated number list, got {text!r}") from exc


def _int_list(text: str) -> list[int]:
    vals = _float_list(text)
    out = []
    for v in vals:
        if v != int(v):
            raise ConfigError(f"expected integers, got {v}")
        out.append(int(v))
    return out


def _solver_params(cfg: dict, args) -> tuple[float, Optional[int]]:
    tol = float(_merged(cfg, "solver", "tol", getattr(args, "tol", None), 1e-10))
    maxit = _merged(cfg, "solver", "maxit", getattr(args, "maxit", None), None)
    return tol, (int(maxit) if maxit is not None else None)


def _require(value, what: str) -> float:
    if value is None:
        raise ConfigError(f"missing {what} (flag or config entry)")
    return float(value)


def _print_matrix(m: np.ndarray) -> None:
    print(f"[[{_fmt(m[0, 0])}, {_fmt(m[0, 1])}],")
    print(f" [{_fmt(m[1, 0])}, {_fmt(m[1, 1])}]]")


def _write_a_star_csv(path, m: np.ndarray, tag: str) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"# config={tag}\n")
        fh.write("m11,m12,m21,m22\n")
        fh.write(f"{_fmt(m[0, 0])},{_fmt(m[0, 1])},{_fmt(m[1, 0])},{_fmt(m[1, 1])}\n")


# --- subcommands ---------------------------------------------------------------


def cmd_corrector(args) -> int:
    cfg = _load_config_file(args.config)
    fld, field_name = _resolve_field(cfg, args)
    R = _require(_merged(cfg, "corrector", "R", args.R), "corrector size R")
    h = _require(_merged(cfg, "corrector", "h", args.h), "corrector mesh size h")
    T = _merged(cfg, "corrector", "T", args.T, None)
    T = float(T) if T is not None else None
    tol, maxit = _solver_params(cfg, args)
    out = _resolve_out(cfg, args)
    os.makedirs(out, exist_ok=True)

    cs = corrector.solve_corrector_set(fld, R, h, T, tol, maxit)
    for entry in cs.entries:
        mesh.dump_grid(entry.chi, os.path.join(out, f"chi_{entry.direction + 1}.grid"))
        gx, gy = entry.grad
        mesh.dump_grid(gx, os.path.join(out, f"grad_chi_{entry.direction + 1}_dx.grid"))
        mesh.dump_grid(gy, os.path.join(out, f"grad_chi_{entry.direction + 1}_dy.grid"))
    meta = {
        "field": field_name,
        "R": R,
        "T": T,
        "h": h,
        "entries": [e.meta() for e in cs.entries],
    }
    with open(os.path.join(out, "corrector_meta.json"), "w", encoding="ascii") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for entry in cs.entries:
        rep = entry.report
        print(
            f"chi_{entry.direction + 1}: {rep.iterations} iterations, "
            f"rel. residual {rep.final_relative_residual:.3e}"
        )
    print(f"wrote corrector fields to {out}")
    return 0


def cmd_homogenize(args) -> int:
    cfg = _load_config_file(args.config)
    fld, field_name = _resolve_field(cfg, args)
    h = _require(_merged(cfg, "corrector", "h", args.h), "corrector mesh size h")
    T = _merged(cfg, "corrector", "T", args.T, None)
    T = float(T) if T is not None else None
    tol, maxit = _solver_params(cfg, args)
    out = _resolve_out(cfg, args)
    os.makedirs(out, exist_ok=True)

    if args.study:
        r_list = _float_list(args.study)
        tag = config_hash({"field": field_name, "R_list": r_list, "T": T, "h": h, "tol": tol})
        table = homogenize.truncation_study(
            fld, r_list, h, use_T_equals_R=args.use_T_equals_R, tol=tol, maxit=maxit
        )
        path = os.path.join(out, "homogenize_study.csv")
        table.to_csv(path, header_comment=f"config={tag}")
        for row in table.rows:
            ref = " (reference)" if row.is_reference else ""
            print(f"R={row.param:g}: max error {row.err_max:.6e}{ref}")
        print(f"wrote {path}")
        return 0

    R = _require(_merged(cfg, "corrector", "R", args.R), "corrector size R")
    tag = config_hash({"field": field_name, "R": R, "T": T, "h": h, "tol": tol})
    if T is not None:
        em = homogenize.effective_matrix_regularized(fld, R, T, h, tol, maxit)
    else:
        em = homogenize.effective_matrix_dirichlet(fld, R, h, tol, maxit)
    _print_matrix(em.m)
    _write_a_star_csv(os.path.join(out, "a_star.csv"), em.m, tag)
    print(f"wrote {os.path.join(out, 'a_star.csv')}")
    return 0


def _study_config(args) -> tuple[fo_approx.ExperimentConfig, dict, str]:
    cfg = _load_config_file(args.config)
    fld, field_name = _resolve_field(cfg, args)
    omega_cfg = cfg.get("omega", {})
    if args.omega:
        vals = _float_list(args.omega)
        if len(vals) != 4:
            raise ConfigError("--omega needs x0,y0,extent_x,extent_y")
        origin, extent = (vals[0], vals[1]), (vals[2], vals[3])
    else:
        origin = tuple(omega_cfg.get("origin", (-1.0, -1.0)))
        extent = tuple(omega_cfg.get("extent", (2.0, 2.0)))
    eps_inverses = tuple(
        _int_list(args.eps) if args.eps else cfg.get("eps", [2, 3, 4, 5, 6])
    )
    h = float(_merged(cfg, "", "h", args.h, 0.01))
    R = float(_merged(cfg, "corrector", "R", args.R, 6.0))
    h_corr = float(_merged(cfg, "corrector", "h", args.h_corr, 0.02))
    T = _merged(cfg, "corrector", "T", args.T, None)
    T = float(T) if T is not None else None
    tol, maxit = _solver_params(cfg, args)
    source_spec = cfg.get("source", {"kind": "constant", "value": 1.0})
    if args.source_kind:
        source_spec = {"kind": args.source_kind}
        if args.source_value is not None:
            source_spec["value"] = args.source_value
        if args.source_frequency:
            source_spec["frequency"] = _float_list(args.source_frequency)
        if args.source_amplitude is not None:
            source_spec["amplitude"] = args.source_amplitude
    wrap = args.wrap if args.wrap else cfg.get("wrap")
    gradient_mode = (
        args.gradient_mode if args.gradient_mode else cfg.get("gradient_mode", "interpolate_chi")
    )
    cell_average = (
        args.cell_average if args.cell_average else cfg.get("cell_average", "midpoint")
    )
    config = fo_approx.ExperimentConfig(
        field=fld,
        field_name=field_name,
        omega=(origin, extent),
        eps_inverses=eps_inverses,
        h=h,
        R=R,
        h_corr=h_corr,
        source_spec=source_spec,
        T=T,
        solver_tol=tol,
        solver_maxit=maxit,
        cell_average=cell_average,
        wrap=wrap,
        gradient_mode=gradient_mode,
    )
    return config, cfg, _resolve_out(cfg, args)


def cmd_study(args) -> int:
    config, _, out = _study_config(args)
    config.validate()
    result = fo_approx.run_study(config, out_dir=out, deterministic=args.deterministic)
    print("A* =")
    _print_matrix(result.a_star.m)
    for n, row in zip(config.eps_inverses, result.rows):
        print(f"1/eps={n}: Err={row.err:.6g} (h1_diff={row.h1_diff:.6g}, h2_u0={row.h2_u0:.6g})")
    print(f"wrote study artifacts to {out}")
    return 0


def _parse_a_star(args) -> homogenize.EffectiveMatrix:
    if args.a_star is None:
        raise ConfigError("homogenized solve needs --a-star m11,m12,m21,m22 or a CSV path")
    if os.path.exists(args.a_star):
        header, rows = read_table(args.a_star)
        if header[:4] != ["m11", "m12", "m21", "m22"] or not rows:
            raise ConfigError(f"{args.a_star} is not an effective-matrix CSV")
        v = [float(c) for c in rows[0][:4]]
    else:
        v = _float_list(args.a_star)
        if len(v) != 4:
            raise ConfigError("--a-star needs four comma-separated entries")
    return homogenize.EffectiveMatrix(np.array([[v[0], v[1]], [v[2], v[3]]]))


def cmd_solve(args) -> int:
    cfg = _load_config_file(args.config)
    tol, maxit = _solver_params(cfg, args)
    out = _resolve_out(cfg, args)
    os.makedirs(out, exist_ok=True)

    omega_cfg = cfg.get("omega", {})
    if args.omega:
        vals = _float_list(args.omega)
        if len(vals) != 4:
            raise ConfigError("--omega needs x0,y0,extent_x,extent_y")
        omega = ((vals[0], vals[1]), (vals[2], vals[3]))
    else:
        omega = (
            tuple(omega_cfg.get("origin", (-1.0, -1.0))),
            tuple(omega_cfg.get("extent", (2.0, 2.0))),
        )

    if args.kind == "manufactured":
        return _solve_manufactured(args, omega, tol, maxit, out)

    h = float(_merged(cfg, "", "h", args.h, 0.01))
    source_spec = cfg.get("source", {"kind": "constant", "value": 1.0})
    f = fo_approx.source_callable(source_spec)

    if args.kind == "oscillating":
        fld, field_name = _resolve_field(cfg, args)
        if args.eps_inv is None:
            raise ConfigError("oscillating solve needs --eps-inv N (eps = 1/N)")
        eps = 1.0 / args.eps_inv
        u, report = fo_approx._oscillating_solution(fld, eps, f, omega, h, tol, maxit)
        name = f"u_eps_N{args.eps_inv}.grid"
        extra = {"field": field_name, "eps": eps}
    elif args.kind == "homogenized":
        em = _parse_a_star(args)
        u, report = fo_approx._homogenized_solution(em, f, omega, h, tol, maxit)
        name = "u0.grid"
        extra = {"a_star": em.m.tolist()}
    else:
        raise ConfigError(f"unknown solve kind {args.kind!r}")

    mesh.dump_grid(u, os.path.join(out, name))
    meta = {"kind": args.kind, "h": h, "omega": [list(omega[0]), list(omega[1])],
            "source": source_spec, "report": report.to_dict(), **extra}
    with open(os.path.join(out, "solve_meta.json"), "w", encoding="ascii") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"{report.iterations} iterations, rel. residual {report.final_relative_residual:.3e}")
    print(f"wrote {os.path.join(out, name)}")
    return 0


def _solve_manufactured(args, omega, tol, maxit, out) -> int:
    """Convergence check: A = I, exact solution sin(pi x1) sin(pi x2)."""
    origin, extent = omega
    for c in (origin[0], origin[1], origin[0] + extent[0], origin[1] + extent[1]):
        if abs(c - round(c)) > 1e-12:
            raise ConfigError("manufactured runs need integer box corners (zero boundary data)")
    identity = coefficients.DiagonalField(
        coefficients.ScalarFieldSpec(1.0), coefficients.ScalarFieldSpec(1.0)
    )

    def exact(pts):
        return np.sin(math.pi * pts[:, 0]) * np.sin(math.pi * pts[:, 1])

    def f(pts):
        return 2.0 * math.pi**2 * exact(pts)

    h_list = _float_list(args.h_list) if args.h_list else [float(args.h or 0.1)]
    tag = config_hash({"kind": "manufactured", "omega": [list(origin), list(extent)], "h_list": h_list})
    rows = []
    for h in h_list:
        m = fo_approx.box_mesh(omega, h)
        system = mesh.assemble_tpfa(m, identity, None, f)
        x, report = linalg.bicgstab(system.matrix, system.rhs, precond=linalg.ilu0(system.matrix), tol=tol, maxit=maxit)
        if not report.converged:
            raise SolveError("manufactured solve did not converge", report=report)
        err = mesh.GridField(m, x - exact(m.cell_centers()))
        l2 = mesh.discrete_norms(m, err)["l2"]
        rows.append((h, l2))
        print(f"h={h:g}: l2 error {l2:.6e}")
    path = os.path.join(out, "convergence.csv")
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"# config={tag}\n")
        fh.write("h,l2_error\n")
        for h, l2 in rows:
            fh.write(f"{_fmt(h)},{_fmt(l2)}\n")
    print(f"wrote {path}")
    return 0


# --- selftest -------------------------------------------------------------------


def _selftest_checks():
    identity = coefficients.DiagonalField(
        coefficients.ScalarFieldSpec(1.0), coefficients.ScalarFieldSpec(1.0)
    )

    def eta_spot():
        got = homogenize.eta_delta(1.0, 0.5, 2.0)
        want = 1.0 + math.exp(-1.0) + 1.0
        assert abs(got - want) <= 1e-12, f"eta(1)={got!r}, want {want!r}"

    def zero_corrector():
        const = coefficients.DiagonalField(
            coefficients.ScalarFieldSpec(3.0), coefficients.ScalarFieldSpec(5.0)
        )
        entry = corrector.solve_dirichlet_corrector(const, 1.0, 0.125, 0, tol=1e-12)
        assert np.abs(entry.chi.values).max() <= 1e-11, "constant field must give chi = 0"

    def tpfa_symmetry():
        fld = coefficients.builtin("asymptotic_periodic_paper")
        m = mesh.build_uniform_mesh((-1.0, -1.0), (2.0, 2.0), (12, 12))
        a = mesh.assemble_tpfa(m, fld).matrix
        diff = np.abs(a.to_dense() - a.to_dense().T).max()
        assert diff == 0.0, f"TPFA matrix asymmetry {diff}"

    def affine_exact():
        m = mesh.build_uniform_mesh((0.0, 0.0), (1.0, 1.0), (4, 4))
        system = mesh.assemble_tpfa(m, identity, lambda p: p[:, 0], None)
        x, report = linalg.bicgstab(system.matrix, system.rhs, precond=linalg.ilu0(system.matrix), tol=1e-12)
        assert report.converged
        assert np.abs(x - m.cell_centers()[:, 0]).max() <= 1e-10, "affine data must be exact"

    def maximum_principle():
        rng = np.random.default_rng(20240901)
        for _ in range(5):
            c1, c2 = rng.uniform(0.5, 4.0, size=2)
            fld = coefficients.DiagonalField(
                coefficients.ScalarFieldSpec(c1, (coefficients.TrigTerm(0.4 * c1, "cos", (2.0, 3.0)),)),
                coefficients.ScalarFieldSpec(c2, (coefficients.TrigTerm(0.4 * c2, "sin", (1.0, 2.0)),)),
            )
            m = mesh.build_uniform_mesh((0.0, 0.0), (1.0, 1.0), (8, 8))
            g = lambda p: np.sin(3.0 * p[:, 0]) + np.cos(2.0 * p[:, 1])
            system = mesh.assemble_tpfa(m, fld, g, None)
            x, report = linalg.bicgstab(system.matrix, system.rhs, precond=linalg.ilu0(system.matrix), tol=1e-12)
            assert report.converged
            pts = np.concatenate([mesh._boundary_cells(m, s)[1] for s in ("left", "right", "bottom", "top")])
            gb = g(pts)
            assert x.min() >= gb.min() - 1e-9 and x.max() <= gb.max() + 1e-9, "maximum principle violated"

    def determinism():
        fld = coefficients.builtin("asymptotic_periodic_paper")
        m = mesh.build_uniform_mesh((-1.0, -1.0), (2.0, 2.0), (16, 16))
        system = mesh.assemble_tpfa(m, fld, None, lambda p: np.ones(p.shape[0]))
        x1, _ = linalg.bicgstab(system.matrix, system.rhs, precond=linalg.ilu0(system.matrix))
        x2, _ = linalg.bicgstab(system.matrix, system.rhs, precond=linalg.ilu0(system.matrix))
        assert np.array_equal(x1, x2), "repeated solves must be bit-identical"

    def bilinear_exact():
        m = mesh.build_uniform_mesh((0.0, 0.0), (1.0, 1.0), (8, 8))
        mat = np.array([[1.0, 0.5], [0.5, 1.0]])
        g = lambda p: p[:, 0] * p[:, 1]
        f = lambda p: np.full(p.shape[0], -1.0)  # -2 * m12 * d2(x*y)/dxdy
        system = mesh.assemble_const_full(m, mat, g, f)
        x, report = linalg.bicgstab(system.matrix, system.rhs, precond=linalg.ilu0(system.matrix), tol=1e-13)
        assert report.converged
        c = m.cell_centers()
        assert np.abs(x - c[:, 0] * c[:, 1]).max() <= 1e-9, "bilinear product must be exact"

    def constant_effective():
        const = coefficients.DiagonalField(
            coefficients.ScalarFieldSpec(2.0), coefficients.ScalarFieldSpec(3.0)
        )
        em = homogenize.effective_matrix_dirichlet(const, 1.0, 0.125, tol=1e-12)
        assert np.abs(em.m - np.diag([2.0, 3.0])).max() <= 1e-10, "constant field A* must be exact"

    return [
        ("eta_delta spot value", eta_spot),
        ("zero corrector on constant field", zero_corrector),
        ("TPFA matrix symmetry", tpfa_symmetry),
        ("affine Dirichlet reproduction", affine_exact),
        ("discrete maximum principle", maximum_principle),
        ("deterministic repeated solve", determinism),
        ("bilinear exactness of the mixed stencil", bilinear_exact),
        ("constant-field effective matrix", constant_effective),
    ]


def cmd_selftest(_args) -> int:
    failures = 0
    for name, fn in _selftest_checks():
        try:
            fn()
        except AssertionError as exc:
            failures += 1
            print(f"FAIL {name}: {exc}")
        else:
            print(f"ok   {name}")
    if failures:
        print(f"{failures} selftest check(s) failed")
        return 3
    print("all selftest checks passed")
    return 0


# --- parser ----------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser, with_field: bool = True) -> None:
    p.add_argument("--config", help="JSON configuration file")
    if with_field:
        p.add_argument("--builtin", choices=coefficients.BUILTIN_NAMES, help="built-in coefficient field")
    p.add_argument("--tol", type=float, help="relative residual tolerance (default 1e-10)")
    p.add_argument("--maxit", type=int, help="solver iteration cap (default 20*sqrt(n))")
    p.add_argument("--out", help="output directory (FVHOM_OUT overrides the default)")
    p.add_argument("--threads", type=int, default=1,
                   help="worker threads; 1 is the deterministic reference path (default)")
    p.add_argument("--deterministic", action="store_true",
                   help="force the sequential reference path (implies --threads 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fvhom",
        description="Finite-volume correctors, homogenized matrices, and first-order approximation studies.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("corrector", help="solve the truncated corrector problems on Q_R")
    _add_common(p)
    p.add_argument("--R", type=float, required=False, help="half side of Q_R = (-R, R)^2")
    p.add_argument("--h", type=float, required=False, help="corrector mesh size")
    p.add_argument("--T", type=float, help="regularization parameter (adds T^-2 zero-order term)")
    p.set_defaults(fn=cmd_corrector)

    p = sub.add_parser("homogenize", help="assemble the effective matrix A*_R (or a truncation study)")
    _add_common(p)
    p.add_argument("--R", type=float, help="half side of Q_R")
    p.add_argument("--h", type=float, help="corrector mesh size")
    p.add_argument("--T", type=float, help="regularization parameter")
    p.add_argument("--study", help="comma-separated R list for a truncation study")
    p.add_argument("--use-T-equals-R", action="store_true", help="study with T = R regularized correctors")
    p.set_defaults(fn=cmd_homogenize)

    p = sub.add_parser("study", help="run the full first-order approximation study")
    _add_common(p)
    p.add_argument("--omega", help="domain as x0,y0,extent_x,extent_y")
    p.add_argument("--eps", help="comma-separated list of N values (eps = 1/N)")
    p.add_argument("--h", type=float, help="fine mesh size on omega")
    p.add_argument("--R", type=float, help="corrector half side")
    p.add_argument("--h-corr", dest="h_corr", type=float, help="corrector mesh size")
    p.add_argument("--T", type=float, help="regularization parameter for the correctors")
    p.add_argument("--source-kind", choices=("constant", "cos_product", "sin_product"))
    p.add_argument("--source-value", type=float)
    p.add_argument("--source-amplitude", type=float)
    p.add_argument("--source-frequency", help="f1,f2 for product sources")
    p.add_argument("--wrap", choices=("periodic",), help="fold x/eps into the unit cell (periodic fields)")
    p.add_argument("--gradient-mode", choices=("interpolate_chi", "interpolate_grad_chi"))
    p.add_argument("--cell-average", choices=("midpoint", "gauss3"))
    p.set_defaults(fn=cmd_study)

    p = sub.add_parser("solve", help="one-off oscillating / homogenized / manufactured solve")
    _add_common(p)
    p.add_argument("--kind", choices=("oscillating", "homogenized", "manufactured"), required=True)
    p.add_argument("--omega", help="domain as x0,y0,extent_x,extent_y")
    p.add_argument("--h", type=float, help="mesh size")
    p.add_argument("--eps-inv", dest="eps_inv", type=int, help="N with eps = 1/N (oscillating)")
    p.add_argument("--a-star", dest="a_star", help="m11,m12,m21,m22 or an a_star.csv path (homogenized)")
    p.add_argument("--h-list", dest="h_list", help="comma-separated h values (manufactured convergence)")
    p.set_defaults(fn=cmd_solve)

    p = sub.add_parser("selftest", help="run the built-in invariant checks")
    _add_common(p, with_field=False)
    p.set_defaults(fn=cmd_selftest)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (SolveError, FactorizationError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3
    except FvhomError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
