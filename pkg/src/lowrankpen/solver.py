"""Proximal-gradient solver for spectrally penalized least squares.

The estimator minimizes ||y - X(Theta)||^2 / (2n) + sum_i p(gamma_i(Theta))
by iterating a gradient step followed by the exact proximal map of the
spectral penalty (scalar prox applied to each singular value of the stepped
iterate).  An optional entrywise box constraint ||Theta||_inf <= alpha* is
enforced by clipping after the prox; the composite prox of box + spectral
penalty has no tractable form, so this splitting is a documented heuristic.

Also provided: a power-iteration smoothness estimate used for the default
step size, the rank-restricted least-squares reference estimator, and the
numeric rank rule shared by all experiments.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from lowrankpen.operators import (
    CompletionDesign,
    Design,
    ObservationSet,
    Subspace,
    apply_adjoint,
    apply_forward,
    loss_gradient,
    loss_value,
)
from lowrankpen.penalty import NUCLEAR, PenaltySpec, penalty_value, scalar_prox

STEP_INVERSE_POWER = "inverse_power"
STEP_FIXED = "fixed"
WARM_ZERO = "zero"
WARM_NUCLEAR = "nuclear"

_POWER_ITER_STEPS = 60
_POWER_ITER_SEED = 181360013
_LIPSCHITZ_INFLATION = 1.05


class DivergenceError(RuntimeError):
    """The objective became non-finite during iteration."""


class RankDeficiencyError(RuntimeError):
    """The reduced normal system stayed singular after the jitter rescue."""

    def __init__(self, null_dim: int):
        super().__init__(f"normal system is rank deficient (null dimension {null_dim})")
        self.null_dim = null_dim


class UnderdeterminedSystemWarning(RuntimeWarning):
    """Fewer observations than coefficients; the minimum-norm solution is returned."""


@dataclass(frozen=True)
class SolverConfig:
    """Iteration controls for :func:`fit`.

    ``step_policy="inverse_power"`` sets the step to the reciprocal of the
    power-iteration smoothness estimate; ``"fixed"`` uses ``eta`` directly.
    ``warm_start="nuclear"`` first solves the convex nuclear-norm problem at
    the same lambda and starts the nonconvex iteration there.
    """

    max_iter: int = 2000
    tol: float = 1e-7
    step_policy: str = STEP_INVERSE_POWER
    eta: float | None = None
    alpha_star: float | None = None
    warm_start: str = WARM_ZERO
    rank_tol_rel: float = 1e-4

    def __post_init__(self) -> None:
        if self.max_iter < 1:
            raise ValueError("max_iter must be positive")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.step_policy not in (STEP_INVERSE_POWER, STEP_FIXED):
            raise ValueError(f"unknown step policy {self.step_policy!r}")
        if self.step_policy == STEP_FIXED and not (self.eta and self.eta > 0):
            raise ValueError("fixed step policy requires a positive eta")
        if self.alpha_star is not None and not self.alpha_star > 0:
            raise ValueError("alpha_star must be positive when set")
        if self.warm_start not in (WARM_ZERO, WARM_NUCLEAR):
            raise ValueError(f"unknown warm start {self.warm_start!r}")
        if not self.rank_tol_rel > 0:
            raise ValueError("rank_tol_rel must be positive")


@dataclass(frozen=True)
class FitResult:
    """Solution of one penalized fit plus its convergence trace."""

    theta_hat: np.ndarray
    spectrum: np.ndarray
    rank_hat: int
    iterations: int
    objective_trace: np.ndarray
    fixed_point_residual: float
    converged: bool

    def to_dict(self) -> dict:
        return {
            "rank_hat": self.rank_hat,
            "iterations": self.iterations,
            "converged": self.converged,
            "fixed_point_residual": self.fixed_point_residual,
            "spectrum": [float(s) for s in self.spectrum],
        }


def numeric_rank(spectrum, rel_tol: float) -> int:
    """Count singular values strictly above rel_tol times the largest one."""
    s = np.asarray(spectrum, dtype=float)
    if s.size and s.min() < 0:
        raise ValueError("spectrum entries must be nonnegative")
    if s.size == 0 or s.max() == 0.0:
        return 0
    return int(np.count_nonzero(s > rel_tol * s.max()))


def estimate_lipschitz(design: Design, n_steps: int = _POWER_ITER_STEPS) -> float:
    """Upper estimate of the largest eigenvalue of Theta -> X*(X(Theta))/n.

    Runs ``n_steps`` power iterations from a fixed pseudorandom start and
    inflates the final Rayleigh quotient by 5 percent so the returned value
    dominates the true operator norm in practice.
    """
    rng = np.random.default_rng(_POWER_ITER_SEED)
    t = rng.standard_normal((design.m1, design.m2))
    t /= np.linalg.norm(t)
    for _ in range(max(n_steps, 1)):
        w = apply_adjoint(design, apply_forward(design, t)) / design.n
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            # start vector fell in the null space; restart from a flat matrix
            t = np.ones((design.m1, design.m2)) / math.sqrt(design.m1 * design.m2)
            continue
        t = w / nrm
    v = apply_forward(design, t)
    rayleigh = float(v @ v) / design.n
    return _LIPSCHITZ_INFLATION * rayleigh


def prox_spectral(spec: PenaltySpec, z: np.ndarray, eta: float) -> np.ndarray:
    """Proximal map of the spectral penalty: scalar prox on each singular value."""
    if not eta > 0:
        raise ValueError("eta must be positive")
    p, s, qt = np.linalg.svd(np.asarray(z, dtype=float), full_matrices=False)
    s_new = np.array([scalar_prox(spec, float(v), eta) for v in s])
    return (p * s_new) @ qt


def _objective(obs: ObservationSet, spec: PenaltySpec, theta: np.ndarray, spectrum=None):
    if spectrum is None:
        spectrum = np.linalg.svd(theta, compute_uv=False)
    # overflow to inf is the divergence signal handled by the caller
    with np.errstate(over="ignore"):
        value = loss_value(obs, theta) + float(np.sum(penalty_value(spec, spectrum)))
    return value, spectrum


def fit(
    obs: ObservationSet,
    spec: PenaltySpec,
    config: SolverConfig = SolverConfig(),
    prox_log: list | None = None,
) -> FitResult:
    """Run the proximal-gradient iteration to a fixed point.

    Stops when the relative iterate change ||T+ - T||_F / max(1, ||T||_F)
    drops below ``config.tol`` or after ``config.max_iter`` prox steps.  The
    reported ``fixed_point_residual`` is ||T - prox(T - eta grad L(T))||_F at
    the final iterate, computed without the box clip.  When ``prox_log`` is a
    list, the singular values of every pre-prox argument are appended to it.
    """
    design = obs.design
    if config.step_policy == STEP_FIXED:
        eta = float(config.eta)
    else:
        eta = 1.0 / estimate_lipschitz(design)

    if config.warm_start == WARM_NUCLEAR and spec.family != NUCLEAR:
        warm = fit(obs, PenaltySpec(NUCLEAR, spec.lam), replace(config, warm_start=WARM_ZERO))
        theta = np.array(warm.theta_hat)
    else:
        theta = np.zeros((design.m1, design.m2))

    obj, _ = _objective(obs, spec, theta)
    trace = [obj]
    converged = False
    iterations = 0
    for k in range(1, config.max_iter + 1):
        z = theta - eta * loss_gradient(obs, theta)
        if not np.all(np.isfinite(z)):
            raise DivergenceError(f"iterate became non-finite at iteration {k}")
        p, s, qt = np.linalg.svd(z, full_matrices=False)
        if prox_log is not None:
            prox_log.append(s.copy())
        s_new = np.array([scalar_prox(spec, float(v), eta) for v in s])
        theta_new = (p * s_new) @ qt
        if config.alpha_star is not None:
            theta_new = np.clip(theta_new, -config.alpha_star, config.alpha_star)
            spectrum = None
        else:
            spectrum = s_new
        obj, spectrum = _objective(obs, spec, theta_new, spectrum)
        if not math.isfinite(obj):
            raise DivergenceError(f"objective became non-finite at iteration {k}")
        trace.append(obj)
        rel = np.linalg.norm(theta_new - theta) / max(1.0, np.linalg.norm(theta))
        theta = theta_new
        iterations = k
        if rel <= config.tol:
            converged = True
            break

    residual_arg = theta - eta * loss_gradient(obs, theta)
    fpr = float(np.linalg.norm(theta - prox_spectral(spec, residual_arg, eta)))
    spectrum = np.linalg.svd(theta, compute_uv=False)
    return FitResult(
        theta_hat=theta,
        spectrum=spectrum,
        rank_hat=numeric_rank(spectrum, config.rank_tol_rel),
        iterations=iterations,
        objective_trace=np.asarray(trace),
        fixed_point_residual=fpr,
        converged=converged,
    )


_DIRECT_SYSTEM_LIMIT = 400
_JITTER_SCALE = 1e-12
_CG_RTOL = 1e-10


def _reduced_design(design: Design, sub: Subspace) -> np.ndarray:
    """Rows are vec(U^T X_i V): the n x r^2 design of the restricted problem."""
    r = sub.r
    if isinstance(design, CompletionDesign):
        jj = design.entries[:, 0]
        kk = design.entries[:, 1]
        cores = sub.U[jj][:, :, None] * sub.V[kk][:, None, :]
    else:
        cores = np.einsum("jr,ijk,ks->irs", sub.U, design.matrices, sub.V)
    return cores.reshape(design.n, r * r)


def solve_oracle(obs: ObservationSet, sub: Subspace) -> np.ndarray:
    """Least-squares fit restricted to the given rank-r subspace.

    Minimizes ||y - X(U C V^T)||^2 / (2n) over the r x r coefficient matrix
    C.  The r^2 x r^2 normal equations are solved directly for r^2 <= 400 and
    by conjugate gradient (relative residual 1e-10) beyond that.  A singular
    normal matrix gets one diagonal jitter of 1e-12 times its trace; if that
    fails the rank deficiency is reported.  With fewer observations than
    coefficients the minimum-norm solution is returned and a warning issued.
    """
    r = sub.r
    if r == 0:
        return np.zeros((obs.design.m1, obs.design.m2))
    if r > min(obs.design.m1, obs.design.m2):
        raise ValueError("subspace rank exceeds matrix dimensions")
    a = _reduced_design(obs.design, sub)
    d = r * r

    if obs.n < d:
        warnings.warn(
            f"{obs.n} observations for {d} coefficients; returning the "
            "minimum-norm solution",
            UnderdeterminedSystemWarning,
            stacklevel=2,
        )
        c, *_ = np.linalg.lstsq(a, obs.y, rcond=None)
        return sub.U @ c.reshape(r, r) @ sub.V.T

    gram = a.T @ a
    rhs = a.T @ obs.y
    if d <= _DIRECT_SYSTEM_LIMIT:
        c = _solve_direct(gram, rhs)
    else:
        c = _solve_cg(gram, rhs)
    return sub.U @ c.reshape(r, r) @ sub.V.T


def _residual_ok(gram: np.ndarray, c: np.ndarray, rhs: np.ndarray) -> bool:
    if not np.all(np.isfinite(c)):
        return False
    scale = max(float(np.linalg.norm(rhs)), 1e-300)
    return float(np.linalg.norm(gram @ c - rhs)) / scale <= 1e-6


def _solve_direct(gram: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        c = np.linalg.solve(gram, rhs)
        if _residual_ok(gram, c, rhs):
            return c
    except np.linalg.LinAlgError:
        pass
    jitter = _JITTER_SCALE * float(np.trace(gram))
    jittered = gram + jitter * np.eye(gram.shape[0])
    try:
        c = np.linalg.solve(jittered, rhs)
    except np.linalg.LinAlgError:
        c = None
    if c is None or not _residual_ok(jittered, c, rhs):
        null_dim = gram.shape[0] - np.linalg.matrix_rank(gram)
        raise RankDeficiencyError(int(null_dim))
    return c


def _solve_cg(gram: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    from scipy.sparse.linalg import cg

    try:
        c, info = cg(gram, rhs, rtol=_CG_RTOL, maxiter=20 * gram.shape[0])
    except TypeError:  # older scipy spells the tolerance "tol"
        c, info = cg(gram, rhs, tol=_CG_RTOL, maxiter=20 * gram.shape[0])
    if info != 0 or not _residual_ok(gram, c, rhs):
        jitter = _JITTER_SCALE * float(np.trace(gram))
        jittered = gram + jitter * np.eye(gram.shape[0])
        try:
            c, info = cg(jittered, rhs, rtol=_CG_RTOL, maxiter=20 * gram.shape[0])
        except TypeError:
            c, info = cg(jittered, rhs, tol=_CG_RTOL, maxiter=20 * gram.shape[0])
        if info != 0 or not _residual_ok(jittered, c, rhs):
            null_dim = gram.shape[0] - np.linalg.matrix_rank(gram)
            raise RankDeficiencyError(int(null_dim))
    return c
