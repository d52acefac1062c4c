"""Declarative coefficient fields A(y) for oscillating elliptic operators.

A scalar coefficient is a constant plus a sum of trigonometric terms plus a
sum of decaying Gaussian bumps.  Matrix fields are either diagonal (two
scalar specs) or a constant full symmetric 2x2 matrix.  Everything is a
plain value type: evaluation is pure and reentrant.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from typing import Union

import numpy as np

from .errors import ConfigError

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class TrigTerm:
    """One term ``amplitude * kind(frequency . y + phase)``.

    Frequencies are in radians per unit length, so ``cos(2*pi*y1)`` is
    ``frequency=(2*pi, 0)``.
    """

    amplitude: float
    kind: str  # "sin" or "cos"
    frequency: tuple[float, float]
    phase: float = 0.0

    def __post_init__(self):
        if self.kind not in ("sin", "cos"):
            raise ConfigError(f"trig term kind must be 'sin' or 'cos', got {self.kind!r}")


@dataclass(frozen=True)
class GaussianTerm:
    """One term ``amplitude * exp(-inverse_width * |y - center|^2)``."""

    amplitude: float
    center: tuple[float, float]
    inverse_width: float


@dataclass(frozen=True)
class ScalarFieldSpec:
    """Declarative scalar coefficient b(y) = constant + trig sum + Gaussian sum."""

    constant: float = 0.0
    trig_terms: tuple[TrigTerm, ...] = ()
    gaussian_terms: tuple[GaussianTerm, ...] = ()


@dataclass(frozen=True)
class DiagonalField:
    """Spatially varying diagonal 2x2 coefficient field diag(a11(y), a22(y))."""

    a11: ScalarFieldSpec
    a22: ScalarFieldSpec


@dataclass(frozen=True)
class ConstantFullField:
    """Constant full symmetric 2x2 coefficient matrix."""

    m: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.m, dtype=float)
        if m.shape != (2, 2):
            raise ConfigError(f"constant matrix must be 2x2, got shape {m.shape}")
        if not np.allclose(m, m.T, rtol=0.0, atol=1e-14 * max(1.0, float(np.abs(m).max()))):
            raise ConfigError("constant matrix field must be symmetric")
        object.__setattr__(self, "m", m)


MatrixField = Union[DiagonalField, ConstantFullField]


@dataclass(frozen=True)
class EpsilonScaled:
    """A matrix field evaluated at the fast variable: eval(x) = eval(base, x / epsilon)."""

    base: MatrixField
    epsilon: float

    def __post_init__(self):
        if not self.epsilon > 0.0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")


AnyField = Union[DiagonalField, ConstantFullField, EpsilonScaled]


def eval_scalar(spec: ScalarFieldSpec, y) -> float | np.ndarray:
    """Evaluate a scalar spec at one point (shape (2,)) or many (shape (n, 2))."""
    y = np.asarray(y, dtype=float)
    scalar_input = y.ndim == 1
    pts = y.reshape(1, 2) if scalar_input else y
    out = np.full(pts.shape[0], spec.constant, dtype=float)
    for t in spec.trig_terms:
        arg = t.frequency[0] * pts[:, 0] + t.frequency[1] * pts[:, 1] + t.phase
        out += t.amplitude * (np.sin(arg) if t.kind == "sin" else np.cos(arg))
    for g in spec.gaussian_terms:
        d2 = (pts[:, 0] - g.center[0]) ** 2 + (pts[:, 1] - g.center[1]) ** 2
        out += g.amplitude * np.exp(-g.inverse_width * d2)
    return float(out[0]) if scalar_input else out


def eval_matrix(fld: AnyField, y) -> np.ndarray:
    """Evaluate a matrix field at a single point y, returning a 2x2 array."""
    if isinstance(fld, EpsilonScaled):
        return eval_matrix(fld.base, np.asarray(y, dtype=float) / fld.epsilon)
    if isinstance(fld, ConstantFullField):
        return fld.m.copy()
    return np.diag([eval_scalar(fld.a11, y), eval_scalar(fld.a22, y)])


def eval_diagonal(fld: AnyField, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized (a11, a22) samples of a diagonal-like field at points (n, 2).

    Accepts DiagonalField, constant-diagonal ConstantFullField, and any
    EpsilonScaled wrapper of those.  Raises ConfigError otherwise; callers
    requiring a diagonal field use this as their precondition check.
    """
    pts = np.asarray(pts, dtype=float)
    if isinstance(fld, EpsilonScaled):
        return eval_diagonal(fld.base, pts / fld.epsilon)
    if isinstance(fld, DiagonalField):
        return eval_scalar(fld.a11, pts), eval_scalar(fld.a22, pts)
    if isinstance(fld, ConstantFullField) and fld.m[0, 1] == 0.0 and fld.m[1, 0] == 0.0:
        n = pts.shape[0]
        return np.full(n, fld.m[0, 0]), np.full(n, fld.m[1, 1])
    raise ConfigError("field is not diagonal")


def is_diagonal(fld: AnyField) -> bool:
    if isinstance(fld, EpsilonScaled):
        return is_diagonal(fld.base)
    if isinstance(fld, DiagonalField):
        return True
    return isinstance(fld, ConstantFullField) and fld.m[0, 1] == 0.0 and fld.m[1, 0] == 0.0


BUILTIN_NAMES = ("asymptotic_periodic_paper", "asymptotic_almost_periodic_paper")

_GAUSS_BUMP = (GaussianTerm(amplitude=1.0, center=(0.0, 0.0), inverse_width=1.0),)


def builtin(name: str) -> DiagonalField:
    """Return one of the two built-in demonstration fields.

    ``asymptotic_periodic_paper``: unit Gaussian bump plus the periodic matrix
    diag(4 + cos(2*pi*y1) + sin(2*pi*y2), 3 + cos(2*pi*y1) + cos(2*pi*y2)).

    ``asymptotic_almost_periodic_paper``: unit Gaussian bump plus the almost
    periodic matrix diag(4 + sin(2*pi*y1) + cos(sqrt(2)*pi*y2),
    3 + sin(sqrt(3)*pi*y1) + cos(pi*y2)).
    """
    if name == "asymptotic_periodic_paper":
        a11 = ScalarFieldSpec(
            constant=4.0,
            trig_terms=(
                TrigTerm(1.0, "cos", (TWO_PI, 0.0)),
                TrigTerm(1.0, "sin", (0.0, TWO_PI)),
            ),
            gaussian_terms=_GAUSS_BUMP,
        )
        a22 = ScalarFieldSpec(
            constant=3.0,
            trig_terms=(
                TrigTerm(1.0, "cos", (TWO_PI, 0.0)),
                TrigTerm(1.0, "cos", (0.0, TWO_PI)),
            ),
            gaussian_terms=_GAUSS_BUMP,
        )
        return DiagonalField(a11, a22)
    if name == "asymptotic_almost_periodic_paper":
        a11 = ScalarFieldSpec(
            constant=4.0,
            trig_terms=(
                TrigTerm(1.0, "sin", (TWO_PI, 0.0)),
                TrigTerm(1.0, "cos", (0.0, math.sqrt(2.0) * math.pi)),
            ),
            gaussian_terms=_GAUSS_BUMP,
        )
        a22 = ScalarFieldSpec(
            constant=3.0,
            trig_terms=(
                TrigTerm(1.0, "sin", (math.sqrt(3.0) * math.pi, 0.0)),
                TrigTerm(1.0, "cos", (0.0, math.pi)),
            ),
            gaussian_terms=_GAUSS_BUMP,
        )
        return DiagonalField(a11, a22)
    raise ConfigError(f"unknown builtin field {name!r}; known: {', '.join(BUILTIN_NAMES)}")


def periodic_part(fld: DiagonalField) -> DiagonalField:
    """Strip all Gaussian (decaying) terms, keeping the purely oscillatory part."""
    return DiagonalField(
        replace(fld.a11, gaussian_terms=()),
        replace(fld.a22, gaussian_terms=()),
    )


def _spec_unit_periodic(spec: ScalarFieldSpec, tol: float = 1e-9) -> bool:
    if spec.gaussian_terms:
        return False
    for t in spec.trig_terms:
        for f in t.frequency:
            k = f / TWO_PI
            if abs(k - round(k)) > tol:
                return False
    return True


def is_unit_periodic(fld: AnyField) -> bool:
    """True when the field repeats on the unit square (integer multiples of 2*pi)."""
    if isinstance(fld, EpsilonScaled):
        return is_unit_periodic(fld.base)
    if isinstance(fld, ConstantFullField):
        return True
    return _spec_unit_periodic(fld.a11) and _spec_unit_periodic(fld.a22)


def ellipticity_scan(
    fld: AnyField,
    box: tuple[tuple[float, float], tuple[float, float]],
    samples_per_axis: int,
) -> tuple[float, float]:
    """Estimate (alpha_hat, beta_hat): the eigenvalue range over a sample lattice.

    ``box`` is ((x0, y0), (extent_x, extent_y)).  A nonpositive alpha_hat is
    surfaced as a warning, not an error — solvers decide for themselves (the
    assembly raises on actually nonpositive cell samples).
    """
    if samples_per_axis < 2:
        raise ConfigError("samples_per_axis must be >= 2")
    (x0, y0), (ex, ey) = box
    xs = np.linspace(x0, x0 + ex, samples_per_axis)
    ys = np.linspace(y0, y0 + ey, samples_per_axis)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    if is_diagonal(fld):
        a11, a22 = eval_diagonal(fld, pts)
        lo = min(a11.min(), a22.min())
        hi = max(a11.max(), a22.max())
    else:
        # constant full matrix: eigenvalues do not depend on the sample point
        w = np.linalg.eigvalsh(fld.m if isinstance(fld, ConstantFullField) else fld.base.m)
        lo, hi = w.min(), w.max()
    if lo <= 0.0:
        warnings.warn(
            f"field is not elliptic on the sampled lattice (alpha_hat = {lo:g})",
            stacklevel=2,
        )
    return float(lo), float(hi)


# --- plain-dict (de)serialization used by the CLI config file -----------------


def scalar_spec_to_dict(spec: ScalarFieldSpec) -> dict:
    return {
        "constant": spec.constant,
        "trig_terms": [
            {
                "amplitude": t.amplitude,
                "kind": t.kind,
                "frequency": list(t.frequency),
                "phase": t.phase,
            }
            for t in spec.trig_terms
        ],
        "gaussian_terms": [
            {
                "amplitude": g.amplitude,
                "center": list(g.center),
                "inverse_width": g.inverse_width,
            }
            for g in spec.gaussian_terms
        ],
    }


def scalar_spec_from_dict(d: dict) -> ScalarFieldSpec:
    try:
        trig = tuple(
            TrigTerm(
                amplitude=float(t["amplitude"]),
                kind=str(t["kind"]),
                frequency=(float(t["frequency"][0]), float(t["frequency"][1])),
                phase=float(t.get("phase", 0.0)),
            )
            for t in d.get("trig_terms", [])
        )
        gauss = tuple(
            GaussianTerm(
                amplitude=float(g["amplitude"]),
                center=(float(g["center"][0]), float(g["center"][1])),
                inverse_width=float(g["inverse_width"]),
            )
            for g in d.get("gaussian_terms", [])
        )
        return ScalarFieldSpec(float(d.get("constant", 0.0)), trig, gauss)
    except (KeyError, IndexError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed scalar field spec: {exc}") from exc


def field_to_dict(fld: MatrixField) -> dict:
    if isinstance(fld, DiagonalField):
        return {
            "diagonal": {
                "a11": scalar_spec_to_dict(fld.a11),
                "a22": scalar_spec_to_dict(fld.a22),
            }
        }
    return {"constant_full": {"m": fld.m.tolist()}}


def field_from_dict(d: dict) -> MatrixField:
    if "builtin" in d:
        return builtin(str(d["builtin"]))
    if "diagonal" in d:
        sub = d["diagonal"]
        return DiagonalField(
            scalar_spec_from_dict(sub["a11"]), scalar_spec_from_dict(sub["a22"])
        )
    if "constant_full" in d:
        return ConstantFullField(np.asarray(d["constant_full"]["m"], dtype=float))
    raise ConfigError(
        "field spec must contain one of 'builtin', 'diagonal', 'constant_full'"
    )
