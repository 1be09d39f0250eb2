"""Monte Carlo simulation lab: ground truth, trials, grids, and holdout RMSE.

A :class:`TrialSpec` describes a full experiment: observation model, matrix
shape and rank, ground-truth spectrum rule, noise level, a grid of sample
sizes, penalty templates (the regularization level is resolved per sample
size from the theory rules), repeat count, and a base seed.

Reproducibility contract: every trial draws from its own substream of a
PCG64 generator.  The substream seed is the first 64-bit state word of
``numpy.random.SeedSequence([base_seed, n, penalty_index, repeat_index])``
and is recorded in the output, so any row of a result table can be
regenerated from its seed column alone.  Trials are independent and can run
in parallel; aggregation folds over trial index order, so results do not
depend on scheduling.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from lowrankpen import theory
from lowrankpen.operators import (
    Subspace,
    generate_observations,
    sample_completion_design,
    sample_sensing_design,
)
from lowrankpen.penalty import MCP, NUCLEAR, SCAD, PenaltySpec
from lowrankpen.solver import DivergenceError, SolverConfig, fit, solve_oracle

COMPLETION = "completion"
SENSING = "sensing"

RNG_DESCRIPTION = (
    "numpy PCG64; per-trial substream seed = first uint64 state of "
    "SeedSequence([base_seed, n, penalty_index, repeat_index])"
)

ORACLE_MATCH_RTOL = 1e-3
SIGMA_FLOOR = 0.01


@dataclass(frozen=True)
class AllAboveNu:
    """All true singular values drawn uniformly in [nu*(1+margin), 2*nu*(1+margin)]."""

    margin: float = 0.2


@dataclass(frozen=True)
class MixedSpectrum:
    """r1 values above nu (uniform in [1.2*nu, 2.4*nu]) plus r2 copies of low_value."""

    r1: int
    r2: int
    low_value: float


SpectrumRule = AllAboveNu | MixedSpectrum


@dataclass(frozen=True)
class PenaltyTemplate:
    """Penalty family and concavity parameter; lambda is resolved per trial.

    For the nuclear norm ``b`` is not a penalty parameter, but spectrum rules
    still use b*lambda as the scale reference so convex and nonconvex cells
    of a grid draw comparable ground truths.
    """

    family: str
    b: float = 0.0

    def __post_init__(self) -> None:
        if self.family not in (NUCLEAR, SCAD, MCP):
            raise ValueError(f"unknown penalty family {self.family!r}")
        if self.family == SCAD and not self.b > 2:
            raise ValueError("SCAD template requires b > 2")
        if self.family == MCP and not self.b > 1:
            raise ValueError("MCP template requires b > 1")


@dataclass(frozen=True)
class TrialSpec:
    """Complete description of a simulation grid."""

    model: str
    m1: int
    m2: int
    r: int
    spectrum_rule: SpectrumRule
    sigma: float
    n_grid: tuple[int, ...]
    penalties: tuple[PenaltyTemplate, ...]
    repeats: int
    base_seed: int
    solver: SolverConfig = field(default_factory=SolverConfig)
    c: float = theory.DEFAULT_RULE_CONSTANT
    lambda_rule: str = "standard"
    probe_directions: int = 200

    def __post_init__(self) -> None:
        if self.model not in (COMPLETION, SENSING):
            raise ValueError(f"unknown model {self.model!r}")
        if self.r < 1 or self.r > min(self.m1, self.m2):
            raise ValueError("r must satisfy 1 <= r <= min(m1, m2)")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        if not self.n_grid or any(n < 1 for n in self.n_grid):
            raise ValueError("n_grid must hold positive sample sizes")
        if not self.penalties:
            raise ValueError("at least one penalty template is required")
        if self.repeats < 1:
            raise ValueError("repeats must be at least 1")
        if self.lambda_rule not in ("standard", "oracle"):
            raise ValueError(f"unknown lambda rule {self.lambda_rule!r}")
        if self.probe_directions < 1:
            raise ValueError("probe_directions must be positive")
        if isinstance(self.spectrum_rule, MixedSpectrum):
            if self.spectrum_rule.r1 + self.spectrum_rule.r2 != self.r:
                raise ValueError("mixed spectrum requires r1 + r2 == r")
        for tpl in self.penalties:
            if not tpl.b > 0:
                raise ValueError(
                    "spectrum rules need b > 0 on every template "
                    "(it sets the ground-truth scale b*lambda)"
                )
        object.__setattr__(self, "n_grid", tuple(int(n) for n in self.n_grid))
        object.__setattr__(self, "penalties", tuple(self.penalties))


# Result-table columns, in file order.
CSV_COLUMNS = (
    "model,m1,m2,r,n,N,penalty,lambda,b,repeat,seed,mse,frob_err,rank_hat,"
    "rank_correct,oracle_match,bound_total,bound_holds,converged,"
    "fixed_point_residual,runtime_seconds"
).split(",")


@dataclass(frozen=True)
class TrialOutcome:
    """One trial's results.  The leading fields mirror the CSV schema; the
    trailing diagnostics support bound audits without re-running the fit."""

    model: str
    m1: int
    m2: int
    r: int
    n: int
    N: float
    penalty: str
    lam: float
    b: float
    repeat: int
    seed: int
    mse: float
    frob_err: float
    rank_hat: int
    rank_correct: bool
    oracle_match: bool | None
    bound_total: float | None
    bound_holds: bool | None
    converged: bool
    fixed_point_residual: float
    runtime_seconds: float
    # diagnostics beyond the CSV schema
    in_cone: bool = False
    cone_ratio: float = math.inf
    kappa_hat: float = 0.0
    rho_hat: float = 0.0
    zeta_minus: float = 0.0
    tau: float = 0.0
    nu: float = 0.0
    r1: int = 0
    r2: int = 0
    theta_star_frob: float = 0.0
    tol: float = 0.0


@dataclass(frozen=True)
class GridResult:
    trials: tuple[TrialOutcome, ...]
    aggregate: tuple[dict, ...]


def rescale_n(model: str, n: int, r: int, m: int) -> float:
    """Rescaled sample size: n/(r*m*log m) for completion, n/(r*m) for sensing."""
    if n < 1 or r < 1 or m < 1:
        raise ValueError("arguments must be positive")
    if model == COMPLETION:
        return n / (r * m * math.log(m))
    if model == SENSING:
        return n / (r * m)
    raise ValueError(f"unknown model {model!r}")


def raw_sample_size(model: str, rescaled: float, r: int, m: int) -> int:
    """Inverse of :func:`rescale_n`, rounded to the nearest integer."""
    if model == COMPLETION:
        return int(round(rescaled * r * m * math.log(m)))
    if model == SENSING:
        return int(round(rescaled * r * m))
    raise ValueError(f"unknown model {model!r}")


def trial_seed(base_seed: int, n: int, penalty_index: int, repeat_index: int) -> int:
    """Derived substream seed; see the module docstring for the rule."""
    ss = np.random.SeedSequence(
        [int(base_seed) & 0xFFFFFFFFFFFFFFFF, int(n), int(penalty_index), int(repeat_index)]
    )
    return int(ss.generate_state(1, np.uint64)[0])


def _sample_frames(rng: np.random.Generator, m1: int, m2: int, r: int):
    """Left/right singular frames of a random Gaussian matrix, first r columns."""
    g = rng.standard_normal((m1, m2))
    u, _, vt = np.linalg.svd(g, full_matrices=False)
    return u[:, :r], vt[:r, :].T


def generate_ground_truth(
    rng: np.random.Generator, m1: int, m2: int, r: int, gamma_values
) -> tuple[np.ndarray, Subspace, np.ndarray]:
    """Random rank-r truth with the prescribed singular values.

    Returns the matrix, the subspace of its singular frames, and the
    spectrum sorted nonincreasing.
    """
    gamma = np.sort(np.asarray(gamma_values, dtype=float))[::-1]
    if gamma.size != r or np.any(gamma <= 0):
        raise ValueError("gamma_values must hold r positive entries")
    if r > min(m1, m2):
        raise ValueError("r exceeds matrix dimensions")
    u, v = _sample_frames(rng, m1, m2, r)
    theta = (u * gamma) @ v.T
    return theta, Subspace(u, v), gamma


def _resolve_lambda(spec: TrialSpec, n: int, probe: theory.CurvatureEstimate) -> float:
    sigma_eff = spec.sigma if spec.sigma > 0 else SIGMA_FLOOR
    if spec.lambda_rule == "oracle":
        if spec.model == COMPLETION:
            big_m = max(spec.m1, spec.m2)
            adj = sigma_eff * math.sqrt(big_m * math.log(big_m) / (spec.m1 * spec.m2 * n))
        else:
            adj = sigma_eff * (math.sqrt(spec.m1 / n) + math.sqrt(spec.m2 / n))
        return theory.lambda_oracle_rule(adj, spec.r, probe.rho_hat, probe.kappa_hat, spec.c)
    if spec.model == COMPLETION:
        return theory.lambda_completion(sigma_eff, spec.m1, spec.m2, n, spec.c)
    return theory.lambda_sensing(sigma_eff, 1.0, spec.m1, spec.m2, n, spec.c)


def _resolve_spectrum(
    spec: TrialSpec, rng: np.random.Generator, nu_ref: float
) -> np.ndarray:
    rule = spec.spectrum_rule
    if isinstance(rule, AllAboveNu):
        lo = nu_ref * (1.0 + rule.margin)
        return rng.uniform(lo, 2.0 * lo, size=spec.r)
    if not rule.low_value < nu_ref:
        raise ValueError(
            f"mixed spectrum low_value {rule.low_value} must stay below nu = {nu_ref}"
        )
    high = rng.uniform(1.2 * nu_ref, 2.4 * nu_ref, size=rule.r1)
    low = np.full(rule.r2, rule.low_value)
    return np.concatenate([high, low])


def run_trial(spec: TrialSpec, n: int, penalty_index: int, repeat_index: int) -> TrialOutcome:
    """Execute one simulation trial.

    Deterministic given (spec, n, penalty_index, repeat_index).  Draw order
    within the substream: singular frames, design, curvature probe, truth
    spectrum, observation noise.  The frames come first because the
    regularization level (and with it the truth scale b*lambda) can depend
    on the probed curvature, while the probe itself only needs the frames.
    """
    t_start = time.perf_counter()
    template = spec.penalties[penalty_index]
    seed = trial_seed(spec.base_seed, n, penalty_index, repeat_index)
    rng = np.random.default_rng(seed)

    u, v = _sample_frames(rng, spec.m1, spec.m2, spec.r)
    sub = Subspace(u, v)
    if spec.model == COMPLETION:
        design = sample_completion_design(rng, spec.m1, spec.m2, n)
        # random non-spiky cone directions track the spikiness-restricted
        # curvature the completion theory uses; no refinement wanted
        refine = False
    else:
        design = sample_sensing_design(rng, spec.m1, spec.m2, n)
        refine = True
    probe = theory.probe_rsc(design, sub, spec.probe_directions, rng, refine=refine)

    lam = _resolve_lambda(spec, n, probe)
    penalty = PenaltySpec(template.family, lam, template.b)
    nu_ref = template.b * lam
    gamma = np.sort(_resolve_spectrum(spec, rng, nu_ref))[::-1]
    theta_star = (u * gamma) @ v.T
    obs = generate_observations(design, theta_star, spec.sigma, rng)

    common = dict(
        model=spec.model,
        m1=spec.m1,
        m2=spec.m2,
        r=spec.r,
        n=n,
        N=rescale_n(spec.model, n, spec.r, max(spec.m1, spec.m2)),
        penalty=template.family,
        lam=lam,
        b=template.b,
        repeat=repeat_index,
        seed=seed,
        kappa_hat=probe.kappa_hat,
        rho_hat=probe.rho_hat,
        zeta_minus=penalty.zeta_minus,
        nu=nu_ref,
        theta_star_frob=float(np.linalg.norm(theta_star)),
        tol=spec.solver.tol,
    )

    try:
        result = fit(obs, penalty, spec.solver)
    except DivergenceError:
        return TrialOutcome(
            mse=math.inf,
            frob_err=math.inf,
            rank_hat=-1,
            rank_correct=False,
            oracle_match=None,
            bound_total=None,
            bound_holds=None,
            converged=False,
            fixed_point_residual=math.inf,
            runtime_seconds=time.perf_counter() - t_start,
            **common,
        )

    delta = result.theta_hat - theta_star
    frob_err = float(np.linalg.norm(delta))
    mse = frob_err**2 / (spec.m1 * spec.m2)
    rank_correct = result.rank_hat == spec.r

    split = theory.split_spectrum(gamma, penalty.nu)
    tau = theory.tau_value(obs, theta_star, sub.subframe(split.s1))
    cone_ratio, in_cone = theory.cone_condition(delta, sub)

    bound_total = None
    bound_holds = None
    if probe.kappa_hat > penalty.zeta_minus:
        report = theory.error_bound_general(
            tau, lam, probe.kappa_hat, penalty.zeta_minus, split.r1, split.r2
        )
        bound_total = report.total
        bound_holds = bool(frob_err <= report.total)

    oracle_match = None
    if template.family != NUCLEAR and isinstance(spec.spectrum_rule, AllAboveNu):
        theta_oracle = solve_oracle(obs, sub)
        rel = float(
            np.linalg.norm(result.theta_hat - theta_oracle)
            / max(np.linalg.norm(theta_oracle), 1e-300)
        )
        oracle_match = bool(rel <= ORACLE_MATCH_RTOL)

    return TrialOutcome(
        mse=mse,
        frob_err=frob_err,
        rank_hat=result.rank_hat,
        rank_correct=rank_correct,
        oracle_match=oracle_match,
        bound_total=bound_total,
        bound_holds=bound_holds,
        converged=result.converged,
        fixed_point_residual=result.fixed_point_residual,
        runtime_seconds=time.perf_counter() - t_start,
        in_cone=in_cone,
        cone_ratio=cone_ratio,
        tau=tau,
        r1=split.r1,
        r2=split.r2,
        **common,
    )


def _trial_task(args) -> TrialOutcome:
    return run_trial(*args)


def run_grid(spec: TrialSpec, jobs: int = 1) -> GridResult:
    """Run the full cartesian grid n_grid x penalties x repeats.

    Trials execute independently (in ``jobs`` worker processes when
    jobs > 1); the result order and every aggregate are a deterministic
    function of the spec alone.
    """
    tasks = [
        (spec, n, p_idx, rep)
        for n in spec.n_grid
        for p_idx in range(len(spec.penalties))
        for rep in range(spec.repeats)
    ]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            trials = tuple(pool.map(_trial_task, tasks, chunksize=1))
    else:
        trials = tuple(_trial_task(t) for t in tasks)

    aggregate = []
    offset = 0
    for n in spec.n_grid:
        for p_idx, template in enumerate(spec.penalties):
            cell = trials[offset : offset + spec.repeats]
            offset += spec.repeats
            mses = np.array([t.mse for t in cell])
            frobs = np.array([t.frob_err for t in cell])
            aggregate.append(
                {
                    "model": spec.model,
                    "n": n,
                    "N": rescale_n(spec.model, n, spec.r, max(spec.m1, spec.m2)),
                    "penalty": template.family,
                    "b": template.b,
                    "lambda": cell[0].lam,
                    "repeats": len(cell),
                    "mean_mse": float(np.mean(mses)),
                    "std_mse": float(np.std(mses, ddof=1)) if len(cell) > 1 else 0.0,
                    "mean_frob_err": float(np.mean(frobs)),
                    "rank_correct_rate": float(np.mean([t.rank_correct for t in cell])),
                    "converged_rate": float(np.mean([t.converged for t in cell])),
                }
            )
    return GridResult(trials=trials, aggregate=tuple(aggregate))


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_trials_csv(path, trials) -> None:
    """Write the per-trial result table with the documented column set."""
    attr_for = {"lambda": "lam"}
    with open(path, "w", newline="") as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for t in trials:
            row = [_csv_cell(getattr(t, attr_for.get(col, col))) for col in CSV_COLUMNS]
            fh.write(",".join(row) + "\n")


def spec_to_jsonable(spec: TrialSpec) -> dict:
    doc = asdict(spec)
    rule = spec.spectrum_rule
    if isinstance(rule, AllAboveNu):
        doc["spectrum_rule"] = {"kind": "all_above_nu", "margin": rule.margin}
    else:
        doc["spectrum_rule"] = {
            "kind": "mixed",
            "r1": rule.r1,
            "r2": rule.r2,
            "low_value": rule.low_value,
        }
    doc["penalties"] = [asdict(t) for t in spec.penalties]
    doc["n_grid"] = list(spec.n_grid)
    return doc


def write_meta_json(path, spec: TrialSpec, elapsed_seconds: float | None = None) -> None:
    """Sidecar metadata: spec echo, library version, RNG identifier.

    The ``run`` block (timestamp, wall time) is execution metadata and is
    the only part allowed to differ between identical runs.
    """
    from lowrankpen import __version__

    meta = {
        "spec": spec_to_jsonable(spec),
        "library_version": __version__,
        "rng": RNG_DESCRIPTION,
        "run": {
            "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
            "elapsed_seconds": elapsed_seconds,
        },
    }
    with open(path, "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def holdout_split(
    triplets: np.ndarray, fraction: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Split triplets into observed and held-out parts, uniformly without
    replacement; ``fraction`` is the observed share."""
    triplets = np.asarray(triplets, dtype=float)
    if triplets.ndim != 2 or triplets.shape[1] != 3 or triplets.shape[0] == 0:
        raise ValueError("triplets must be a nonempty (n, 3) array")
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must lie strictly between 0 and 1")
    total = triplets.shape[0]
    n_train = int(round(fraction * total))
    if n_train == 0 or n_train == total:
        raise ValueError("split leaves an empty side; adjust fraction or data size")
    perm = rng.permutation(total)
    return triplets[perm[:n_train]], triplets[perm[n_train:]]


def rmse(predicted: np.ndarray, test_triplets: np.ndarray) -> float:
    """Root mean squared error of matrix predictions on held-out triplets."""
    test = np.asarray(test_triplets, dtype=float)
    if test.ndim != 2 or test.shape[1] != 3 or test.shape[0] == 0:
        raise ValueError("test triplets must be a nonempty (n, 3) array")
    predicted = np.asarray(predicted, dtype=float)
    jj = test[:, 0].astype(np.int64)
    kk = test[:, 1].astype(np.int64)
    diff = predicted[jj, kk] - test[:, 2]
    return float(np.sqrt(np.mean(diff * diff)))
