"""Command-line front end: simulate grids, fit from files, evaluate holdout RMSE.

Exit codes are a stable contract: 0 ok, 1 internal error, 2 invalid input
(config or data file), 3 I/O failure, 4 resource guard tripped.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
import traceback

import numpy as np

from lowrankpen import __version__, fileio, simlab, theory
from lowrankpen.fileio import InputFormatError
from lowrankpen.operators import CompletionDesign, ObservationSet
from lowrankpen.penalty import MCP, NUCLEAR, SCAD, PenaltySpec
from lowrankpen.simlab import (
    AllAboveNu,
    MixedSpectrum,
    PenaltyTemplate,
    TrialSpec,
)
from lowrankpen.solver import SolverConfig, fit

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_INVALID_INPUT = 2
EXIT_IO = 3
EXIT_RESOURCE = 4

MAX_CELLS = 10**8


class ConfigError(ValueError):
    """Invalid run configuration; the message names the offending key."""

    def __init__(self, key: str, message: str):
        super().__init__(f"key '{key}': {message}")
        self.key = key


class ResourceGuardError(RuntimeError):
    pass


def _require(cfg: dict, key: str, kind, where: str = "config"):
    if key not in cfg:
        raise ConfigError(key, f"missing from {where}")
    value = cfg[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, kind) or isinstance(value, bool):
        raise ConfigError(key, f"expected {kind.__name__}")
    return value


_TOP_KEYS = {
    "model", "m1", "m2", "r", "sigma", "spectrum_rule", "n_grid", "N_grid",
    "penalties", "repeats", "base_seed", "c", "lambda_rule",
    "probe_directions", "solver", "out_dir",
}
_SOLVER_KEYS = {
    "max_iter", "tol", "step_policy", "eta", "alpha_star", "warm_start", "rank_tol_rel",
}


def parse_run_config(cfg: dict) -> tuple[TrialSpec, str | None]:
    """Validate a run-config document and build the TrialSpec it describes."""
    if not isinstance(cfg, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    for key in cfg:
        if key not in _TOP_KEYS:
            raise ConfigError(key, "unknown key")

    model = _require(cfg, "model", str)
    if model not in (simlab.COMPLETION, simlab.SENSING):
        raise ConfigError("model", f"must be 'completion' or 'sensing', got {model!r}")
    m1 = _require(cfg, "m1", int)
    m2 = _require(cfg, "m2", int)
    r = _require(cfg, "r", int)
    if m1 < 1 or m2 < 1:
        raise ConfigError("m1", "dimensions must be positive")
    if r < 1 or r > min(m1, m2):
        raise ConfigError("r", f"must satisfy 1 <= r <= min(m1, m2) = {min(m1, m2)}")
    sigma = _require(cfg, "sigma", float)
    if sigma < 0:
        raise ConfigError("sigma", "must be nonnegative")

    rule_doc = _require(cfg, "spectrum_rule", dict)
    kind = rule_doc.get("kind")
    if kind == "all_above_nu":
        extra = set(rule_doc) - {"kind", "margin"}
        if extra:
            raise ConfigError(sorted(extra)[0], "unknown key in spectrum_rule")
        rule: simlab.SpectrumRule = AllAboveNu(margin=float(rule_doc.get("margin", 0.2)))
    elif kind == "mixed":
        extra = set(rule_doc) - {"kind", "r1", "r2", "low_value"}
        if extra:
            raise ConfigError(sorted(extra)[0], "unknown key in spectrum_rule")
        rule = MixedSpectrum(
            r1=_require(rule_doc, "r1", int, "spectrum_rule"),
            r2=_require(rule_doc, "r2", int, "spectrum_rule"),
            low_value=_require(rule_doc, "low_value", float, "spectrum_rule"),
        )
    else:
        raise ConfigError("spectrum_rule.kind", "must be 'all_above_nu' or 'mixed'")

    if ("n_grid" in cfg) == ("N_grid" in cfg):
        raise ConfigError("n_grid", "exactly one of n_grid / N_grid is required")
    if "n_grid" in cfg:
        raw = cfg["n_grid"]
        if not isinstance(raw, list) or not raw:
            raise ConfigError("n_grid", "must be a nonempty list of integers")
        try:
            n_grid = tuple(int(x) for x in raw)
        except (TypeError, ValueError):
            raise ConfigError("n_grid", "must be a nonempty list of integers") from None
    else:
        raw = cfg["N_grid"]
        if not isinstance(raw, list) or not raw:
            raise ConfigError("N_grid", "must be a nonempty list of numbers")
        try:
            n_grid = tuple(
                simlab.raw_sample_size(model, float(x), r, max(m1, m2)) for x in raw
            )
        except (TypeError, ValueError):
            raise ConfigError("N_grid", "must be a nonempty list of numbers") from None

    pens_doc = cfg.get("penalties")
    if not isinstance(pens_doc, list) or not pens_doc:
        raise ConfigError("penalties", "must be a nonempty list")
    penalties = []
    for i, doc in enumerate(pens_doc):
        if not isinstance(doc, dict):
            raise ConfigError("penalties", f"entry {i} must be an object")
        extra = set(doc) - {"family", "b"}
        if extra:
            raise ConfigError(sorted(extra)[0], f"unknown key in penalties[{i}]")
        family = _require(doc, "family", str, f"penalties[{i}]")
        try:
            penalties.append(PenaltyTemplate(family=family, b=float(doc.get("b", 0.0))))
        except ValueError as exc:
            raise ConfigError(f"penalties[{i}]", str(exc)) from None

    solver_doc = cfg.get("solver", {})
    if not isinstance(solver_doc, dict):
        raise ConfigError("solver", "must be an object")
    for key in solver_doc:
        if key not in _SOLVER_KEYS:
            raise ConfigError(key, "unknown key in solver")
    try:
        solver = SolverConfig(**solver_doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError("solver", str(exc)) from None

    out_dir = cfg.get("out_dir")
    if out_dir is not None and not isinstance(out_dir, str):
        raise ConfigError("out_dir", "must be a string path")

    for key, kind in (("c", float), ("lambda_rule", str), ("probe_directions", int)):
        if key in cfg:
            _require(cfg, key, kind)
    try:
        spec = TrialSpec(
            model=model,
            m1=m1,
            m2=m2,
            r=r,
            spectrum_rule=rule,
            sigma=sigma,
            n_grid=n_grid,
            penalties=tuple(penalties),
            repeats=_require(cfg, "repeats", int),
            base_seed=_require(cfg, "base_seed", int),
            solver=solver,
            c=float(cfg.get("c", theory.DEFAULT_RULE_CONSTANT)),
            lambda_rule=cfg.get("lambda_rule", "standard"),
            probe_directions=int(cfg.get("probe_directions", 200)),
        )
    except ValueError as exc:
        raise ConfigError("<spec>", str(exc)) from None
    return spec, out_dir


def cmd_simulate(args) -> int:
    with open(args.config) as fh:
        try:
            cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError("<json>", f"config is not valid JSON: {exc}") from None
    spec, cfg_out = parse_run_config(cfg)
    out_dir = args.out_dir or cfg_out
    if not out_dir:
        raise ConfigError("out_dir", "missing (set it in the config or pass --out-dir)")
    os.makedirs(out_dir, exist_ok=True)
    t0 = time.perf_counter()
    result = simlab.run_grid(spec, jobs=args.jobs)
    elapsed = time.perf_counter() - t0
    simlab.write_trials_csv(os.path.join(out_dir, "results.csv"), result.trials)
    simlab.write_meta_json(os.path.join(out_dir, "meta.json"), spec, elapsed)
    print(
        f"simulate: {len(result.trials)} trials "
        f"({len(spec.n_grid)} n x {len(spec.penalties)} penalties x {spec.repeats} repeats) "
        f"in {elapsed:.1f}s -> {out_dir}/results.csv"
    )
    return EXIT_OK


def _build_penalty(args, m1: int, m2: int, n: int) -> PenaltySpec:
    lam = args.lam
    if lam is None:
        if args.sigma is None:
            raise ConfigError("lambda", "pass --lambda or --sigma to resolve it")
        sigma_eff = args.sigma if args.sigma > 0 else 0.01
        lam = theory.lambda_completion(sigma_eff, m1, m2, n, args.c)
    return PenaltySpec(args.penalty, lam, args.b)


def _solver_from_args(args) -> SolverConfig:
    return SolverConfig(
        max_iter=args.max_iter,
        tol=args.tol,
        alpha_star=args.alpha_star,
        warm_start=args.warm_start,
        rank_tol_rel=args.rank_tol,
    )


def _load_observations(args):
    """Read a dense or triplet file into a completion observation set."""
    fmt = args.format
    if fmt == "auto":
        fmt = fileio.detect_format(args.input)
    if fmt == "dense":
        dense = fileio.read_dense_matrix(args.input)
        m1, m2 = dense.shape
        _guard_cells(m1, m2)
        jj, kk = np.meshgrid(np.arange(m1), np.arange(m2), indexing="ij")
        entries = np.column_stack([jj.ravel(), kk.ravel()])
        design = CompletionDesign(m1=m1, m2=m2, entries=entries)
        y = dense.ravel()
        return design, y
    triplets, lines = fileio.read_triplets(args.input)
    jj = triplets[:, 0].astype(np.int64)
    kk = triplets[:, 1].astype(np.int64)
    m1 = args.m1 if args.m1 else int(jj.max()) + 1
    m2 = args.m2 if args.m2 else int(kk.max()) + 1
    _guard_cells(m1, m2)
    bad = np.flatnonzero((jj < 0) | (jj >= m1) | (kk < 0) | (kk >= m2))
    if bad.size:
        raise InputFormatError(
            f"index ({jj[bad[0]]},{kk[bad[0]]}) outside {m1}x{m2}", int(lines[bad[0]])
        )
    design = CompletionDesign(m1=m1, m2=m2, entries=np.column_stack([jj, kk]))
    return design, triplets[:, 2]


def _guard_cells(m1: int, m2: int) -> None:
    if m1 * m2 > MAX_CELLS:
        raise ResourceGuardError(
            f"matrix of {m1} x {m2} = {m1 * m2} cells exceeds the {MAX_CELLS} guard"
        )


def cmd_fit(args) -> int:
    design, y = _load_observations(args)
    obs = ObservationSet(design=design, y=y, sigma=args.sigma or 0.0)
    penalty = _build_penalty(args, design.m1, design.m2, design.n)
    result = fit(obs, penalty, _solver_from_args(args))
    fileio.write_dense_matrix(args.out_prefix + ".theta.csv", result.theta_hat)
    doc = result.to_dict()
    doc["lambda"] = penalty.lam
    doc["penalty"] = penalty.family
    with open(args.out_prefix + ".fit.json", "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(
        f"fit: {design.m1}x{design.m2}, n={design.n}, penalty={penalty.family}, "
        f"rank_hat={result.rank_hat}, converged={result.converged} "
        f"-> {args.out_prefix}.theta.csv"
    )
    return EXIT_OK


def cmd_evaluate(args) -> int:
    triplets, lines = fileio.read_triplets(args.input)
    jj = triplets[:, 0].astype(np.int64)
    kk = triplets[:, 1].astype(np.int64)
    m1 = args.m1 if args.m1 else int(jj.max()) + 1
    m2 = args.m2 if args.m2 else int(kk.max()) + 1
    _guard_cells(m1, m2)
    bad = np.flatnonzero((jj >= m1) | (kk >= m2))
    if bad.size:
        raise InputFormatError(
            f"index ({jj[bad[0]]},{kk[bad[0]]}) outside {m1}x{m2}", int(lines[bad[0]])
        )
    rng = np.random.default_rng(args.seed)
    try:
        train, test = simlab.holdout_split(triplets, args.holdout_fraction, rng)
    except ValueError as exc:
        raise InputFormatError(str(exc)) from None
    entries = train[:, :2].astype(np.int64)
    design = CompletionDesign(m1=m1, m2=m2, entries=entries)
    obs = ObservationSet(design=design, y=train[:, 2], sigma=args.sigma or 0.0)
    penalty = _build_penalty(args, m1, m2, design.n)
    result = fit(obs, penalty, _solver_from_args(args))
    score = simlab.rmse(result.theta_hat, test)
    doc = {
        "rmse": score,
        "rank_hat": result.rank_hat,
        "lambda": penalty.lam,
        "seed": args.seed,
    }
    with open(args.out, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(
        f"evaluate: n_train={design.n}, n_test={test.shape[0]}, "
        f"rmse={score:.6g}, rank_hat={result.rank_hat} -> {args.out}"
    )
    return EXIT_OK


def _add_penalty_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--penalty", choices=[NUCLEAR, SCAD, MCP], default=SCAD)
    p.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="regularization level; resolved from --sigma when omitted")
    p.add_argument("--b", type=float, default=3.7, help="concavity parameter")
    p.add_argument("--c", type=float, default=theory.DEFAULT_RULE_CONSTANT,
                   help="rule constant used when resolving lambda")
    p.add_argument("--sigma", type=float, default=None, help="noise level")
    p.add_argument("--alpha-star", dest="alpha_star", type=float, default=None,
                   help="entrywise box bound")
    p.add_argument("--max-iter", dest="max_iter", type=int, default=2000)
    p.add_argument("--tol", type=float, default=1e-7)
    p.add_argument("--rank-tol", dest="rank_tol", type=float, default=1e-4)
    p.add_argument("--warm-start", dest="warm_start", choices=["zero", "nuclear"],
                   default="zero")
    p.add_argument("--seed", type=int, default=0, help="rng seed (used by evaluate)")
    p.add_argument("--m1", type=int, default=None, help="rows (triplet input only)")
    p.add_argument("--m2", type=int, default=None, help="columns (triplet input only)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lowrankpen",
        description="Low-rank estimation with nonconvex spectral penalties",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run a simulation grid from a JSON config")
    p_sim.add_argument("config", help="run-config JSON path")
    p_sim.add_argument("--out-dir", default=None, help="output directory")
    p_sim.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                       help="parallel trial workers")
    p_sim.set_defaults(func=cmd_simulate)

    p_fit = sub.add_parser("fit", help="fit one model from a dense or triplet CSV")
    p_fit.add_argument("input", help="dense matrix CSV or j,k,value triplet CSV")
    p_fit.add_argument("out_prefix", help="writes <prefix>.theta.csv and <prefix>.fit.json")
    p_fit.add_argument("--format", choices=["auto", "dense", "triplets"], default="auto")
    _add_penalty_flags(p_fit)
    p_fit.set_defaults(func=cmd_fit)

    p_eval = sub.add_parser("evaluate", help="holdout RMSE on a triplet file")
    p_eval.add_argument("input", help="j,k,value triplet CSV")
    p_eval.add_argument("out", help="output JSON path")
    p_eval.add_argument("--holdout-fraction", dest="holdout_fraction", type=float,
                        default=0.5, help="observed share of the triplets")
    _add_penalty_flags(p_eval)
    p_eval.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, InputFormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID_INPUT
    except ResourceGuardError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except Exception:
        traceback.print_exc()
        return EXIT_INTERNAL


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
