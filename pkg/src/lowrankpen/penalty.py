"""Scalar folded-concave penalties on singular values.

Three families are supported, all parameterized by a regularization level
``lambda`` and (for the nonconvex ones) a concavity parameter ``b``:

* ``nuclear`` -- p(t) = lambda*|t|, the plain l1 penalty on a singular value.
* ``scad``    -- a quadratic spline with knots at lambda and b*lambda that is
  linear near zero and exactly flat beyond b*lambda.
* ``mcp``     -- the minimax concave spline, flat beyond b*lambda.

Every family decomposes as p(t) = lambda*|t| + q(t) with a concave component
q.  The decomposition is taken literally: ``concave_part_value`` is defined by
subtraction, which guarantees the identity holds to machine precision.

Two derived scalars drive the theory diagnostics elsewhere in the package:

* ``nu``: the flatness threshold (p'(t) = 0 for t >= nu); b*lambda for
  SCAD/MCP, +inf for the nuclear norm.
* ``zeta_minus``: the concavity level of q (weak convexity constant);
  1/(b-1) for SCAD, 1/b for MCP, 0 for the nuclear norm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

NUCLEAR = "nuclear"
SCAD = "scad"
MCP = "mcp"

_FAMILIES = (NUCLEAR, SCAD, MCP)


@dataclass(frozen=True)
class PenaltySpec:
    """Penalty family plus its parameters.

    Parameters
    ----------
    family : str
        One of ``"nuclear"``, ``"scad"``, ``"mcp"``.
    lam : float
        Regularization level, must be positive.  Serialized under the JSON
        key ``"lambda"``.
    b : float
        Concavity parameter.  SCAD requires b > 2, MCP requires b > 1.
        Ignored by the nuclear norm (kept for round-tripping).
    """

    family: str
    lam: float
    b: float = 0.0

    def __post_init__(self) -> None:
        if self.family not in _FAMILIES:
            raise ValueError(f"unknown penalty family {self.family!r}")
        if not (math.isfinite(self.lam) and self.lam > 0):
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if self.family == SCAD and not self.b > 2:
            raise ValueError(f"SCAD requires b > 2, got b={self.b}")
        if self.family == MCP and not self.b > 1:
            raise ValueError(f"MCP requires b > 1, got b={self.b}")

    @property
    def nu(self) -> float:
        """Flatness threshold: p'(t) = 0 for all t >= nu."""
        if self.family == NUCLEAR:
            return math.inf
        return self.b * self.lam

    @property
    def zeta_minus(self) -> float:
        """Concavity level of the concave component q."""
        if self.family == SCAD:
            return 1.0 / (self.b - 1.0)
        if self.family == MCP:
            return 1.0 / self.b
        return 0.0

    def to_dict(self) -> dict:
        return {"family": self.family, "lambda": self.lam, "b": self.b}

    @classmethod
    def from_dict(cls, data: dict) -> "PenaltySpec":
        return cls(family=data["family"], lam=data["lambda"], b=data.get("b", 0.0))


def _value_scalar(spec: PenaltySpec, t: float) -> float:
    a = abs(t)
    lam, b = spec.lam, spec.b
    if spec.family == NUCLEAR:
        return lam * a
    if spec.family == SCAD:
        if a <= lam:
            return lam * a
        if a <= b * lam:
            return -(a * a - 2.0 * b * lam * a + lam * lam) / (2.0 * (b - 1.0))
        return (b + 1.0) * lam * lam / 2.0
    # MCP
    if a <= b * lam:
        return lam * a - a * a / (2.0 * b)
    return b * lam * lam / 2.0


def penalty_value(spec: PenaltySpec, t):
    """Evaluate p(|t|) for a scalar or array argument.

    SCAD branches: lambda*|t| on [0, lambda]; a downward quadratic on
    (lambda, b*lambda]; the constant (b+1)*lambda^2/2 beyond.  MCP:
    lambda*|t| - t^2/(2b) on [0, b*lambda]; b*lambda^2/2 beyond.  Both
    splines are continuous across their knots.
    """
    arr = np.asarray(t, dtype=float)
    a = np.abs(arr)
    lam, b = spec.lam, spec.b
    # np.select evaluates every branch; overflow in a branch that is not
    # selected (huge |t| in the quadratic piece) is harmless
    with np.errstate(over="ignore"):
        if spec.family == NUCLEAR:
            out = lam * a
        elif spec.family == SCAD:
            out = np.select(
                [a <= lam, a <= b * lam],
                [lam * a, -(a * a - 2.0 * b * lam * a + lam * lam) / (2.0 * (b - 1.0))],
                default=(b + 1.0) * lam * lam / 2.0,
            )
        else:
            out = np.where(a <= b * lam, lam * a - a * a / (2.0 * b), b * lam * lam / 2.0)
    if np.ndim(t) == 0:
        return float(out)
    return out


def penalty_derivative(spec: PenaltySpec, t):
    """Evaluate p'(t) for t > 0 (scalar or array).

    Equals lambda on the first branch, zero at and beyond the flatness
    threshold nu.  The subdifferential at zero is out of scope; any
    nonpositive argument raises.
    """
    arr = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise ValueError("penalty_derivative requires strictly positive, finite t")
    lam, b = spec.lam, spec.b
    if spec.family == NUCLEAR:
        out = np.full_like(arr, lam)
    elif spec.family == SCAD:
        out = np.select(
            [arr <= lam, arr <= b * lam],
            [np.full_like(arr, lam), (b * lam - arr) / (b - 1.0)],
            default=0.0,
        )
    else:
        out = np.where(arr <= b * lam, lam - arr / b, 0.0)
    if np.ndim(t) == 0:
        return float(out)
    return out


def concave_part_value(spec: PenaltySpec, t):
    """q(t) = p(t) - lambda*|t|, defined by subtraction."""
    arr = np.asarray(t, dtype=float)
    out = penalty_value(spec, arr) - spec.lam * np.abs(arr)
    if np.ndim(t) == 0:
        return float(out)
    return out


def concave_part_derivative(spec: PenaltySpec, t):
    """q'(t) = p'(t) - lambda for t > 0."""
    arr = np.asarray(t, dtype=float)
    out = penalty_derivative(spec, arr) - spec.lam
    if np.ndim(t) == 0:
        return float(out)
    return out


def scalar_prox(spec: PenaltySpec, z: float, eta: float) -> float:
    """Global minimizer of f(x) = (x - z)^2 / 2 + eta * p(|x|).

    The minimizer is found by enumerating every point that can be a local
    minimum: the spline knots {0, lambda, b*lambda}, the identity point z,
    and the stationary point of each quadratic branch.  Enumerating and
    comparing objective values sidesteps the case analysis a closed form
    would need for general eta.  Exact ties go to the candidate with the
    smaller magnitude, which keeps the map odd and deterministic.
    """
    if not (math.isfinite(eta) and eta > 0):
        raise ValueError(f"eta must be positive and finite, got {eta}")
    if not math.isfinite(z):
        raise ValueError(f"z must be finite, got {z}")
    a = abs(z)
    sign = 1.0 if z >= 0 else -1.0
    lam, b = spec.lam, spec.b

    candidates = [0.0, a]
    if spec.family == NUCLEAR:
        candidates.append(a - eta * lam)
    elif spec.family == SCAD:
        candidates.extend([lam, b * lam, a - eta * lam])
        denom = (b - 1.0) - eta
        if denom != 0.0:
            candidates.append(((b - 1.0) * a - eta * b * lam) / denom)
    else:
        candidates.append(b * lam)
        if b != eta:
            candidates.append(b * (a - eta * lam) / (b - eta))

    def half_square(d: float) -> float:
        try:
            return 0.5 * d * d
        except OverflowError:
            return math.inf

    best_x = 0.0
    best_f = half_square(a)  # f(0)
    for x in sorted(set(c for c in candidates if c > 0 and math.isfinite(c))):
        f = half_square(x - a) + eta * _value_scalar(spec, x)
        if f < best_f:
            best_f = f
            best_x = x
    return sign * best_x


@dataclass(frozen=True)
class ConditionCheck:
    """Outcome of one regularity condition: pass/fail plus the worst case."""

    passed: bool
    witness: float
    at: object = None


@dataclass(frozen=True)
class RegularityReport:
    """Per-condition results of :func:`check_regularity`.

    ``curvature_bounded.witness`` is the empirical concavity level, the
    largest value of -(q'(t') - q'(t)) / (t' - t) observed on the grid; for a
    penalty meeting the conditions it reproduces ``zeta_minus``.
    """

    flat_beyond_nu: ConditionCheck
    curvature_bounded: ConditionCheck
    zero_at_origin: ConditionCheck
    derivative_within_lambda: ConditionCheck

    @property
    def all_passed(self) -> bool:
        return (
            self.flat_beyond_nu.passed
            and self.curvature_bounded.passed
            and self.zero_at_origin.passed
            and self.derivative_within_lambda.passed
        )


_REG_TOL = 1e-9


def check_regularity(spec: PenaltySpec, grid) -> RegularityReport:
    """Numerically verify the four penalty regularity conditions on a grid.

    (i)   p'(t) = 0 for every grid point t >= nu.  A penalty with nu = +inf
          (nuclear) fails: no finite flatness threshold exists, and the
          witness is p' at the largest grid point.
    (ii)  q'(t') - q'(t) >= -zeta_minus * (t' - t) - 1e-9 for all grid pairs
          t' >= t.
    (iii) q(0) = 0 and q'(0+) = 0 within 1e-9 (the one-sided derivative is
          probed at t = 1e-12).
    (iv)  |q'(t)| <= lambda + 1e-9 on the grid.
    """
    pts = np.asarray(grid, dtype=float)
    if pts.ndim != 1 or pts.size == 0:
        raise ValueError("grid must be a nonempty 1-D sequence")
    if np.any(pts <= 0) or np.any(np.diff(pts) <= 0):
        raise ValueError("grid must be strictly increasing and positive")

    lam = spec.lam
    nu = spec.nu
    zeta = spec.zeta_minus
    qd = concave_part_derivative(spec, pts)

    # (i) flatness beyond nu
    if math.isinf(nu):
        flat = ConditionCheck(
            passed=False,
            witness=float(penalty_derivative(spec, pts[-1])),
            at=float(pts[-1]),
        )
    else:
        beyond = pts[pts >= nu]
        if beyond.size == 0:
            flat = ConditionCheck(passed=True, witness=0.0, at=None)
        else:
            dv = np.abs(penalty_derivative(spec, beyond))
            k = int(np.argmax(dv))
            flat = ConditionCheck(
                passed=bool(dv[k] <= _REG_TOL), witness=float(dv[k]), at=float(beyond[k])
            )

    # (ii) curvature of q' bounded below by -zeta_minus
    dq = qd[None, :] - qd[:, None]
    dt = pts[None, :] - pts[:, None]
    upper = dt > 0
    if not upper.any():
        curvature = ConditionCheck(passed=True, witness=0.0, at=None)
    else:
        slack = np.where(upper, dq + zeta * dt, np.inf)
        worst = float(slack.min())
        slopes = np.where(upper, -dq / np.where(upper, dt, 1.0), -np.inf)
        k_flat = int(np.argmax(slopes))
        i, j = divmod(k_flat, pts.size)
        curvature = ConditionCheck(
            passed=bool(worst >= -_REG_TOL),
            witness=float(slopes.flat[k_flat]),
            at=(float(pts[i]), float(pts[j])),
        )

    # (iii) q and q' vanish at the origin
    q0 = abs(concave_part_value(spec, 0.0))
    qd0 = abs(concave_part_derivative(spec, 1e-12))
    origin = ConditionCheck(
        passed=bool(max(q0, qd0) <= _REG_TOL), witness=float(max(q0, qd0)), at=0.0
    )

    # (iv) |q'| bounded by lambda
    absqd = np.abs(qd)
    k = int(np.argmax(absqd))
    bounded = ConditionCheck(
        passed=bool(absqd[k] <= lam + _REG_TOL), witness=float(absqd[k]), at=float(pts[k])
    )

    return RegularityReport(
        flat_beyond_nu=flat,
        curvature_bounded=curvature,
        zero_at_origin=origin,
        derivative_within_lambda=bounded,
    )
