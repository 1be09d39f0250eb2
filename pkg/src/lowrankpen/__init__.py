"""Low-rank matrix estimation with nonconvex spectral penalties.

The package provides scalar folded-concave penalties (SCAD, MCP) and the
nuclear norm applied to singular values, observation designs for matrix
completion and Gaussian sensing, a proximal-gradient solver with an exact
rank-restricted least-squares reference, executable error-bound and
curvature diagnostics, and a Monte Carlo simulation lab with a CLI.
"""

from lowrankpen.penalty import (
    MCP,
    NUCLEAR,
    SCAD,
    PenaltySpec,
    RegularityReport,
    check_regularity,
    concave_part_derivative,
    concave_part_value,
    penalty_derivative,
    penalty_value,
    scalar_prox,
)
from lowrankpen.operators import (
    CompletionDesign,
    ObservationSet,
    SensingDesign,
    Subspace,
    apply_adjoint,
    apply_forward,
    generate_observations,
    loss_gradient,
    loss_value,
    project_complement,
    project_onto,
    sample_completion_design,
    sample_sensing_design,
    spikiness,
)
from lowrankpen.solver import (
    DivergenceError,
    FitResult,
    RankDeficiencyError,
    SolverConfig,
    UnderdeterminedSystemWarning,
    estimate_lipschitz,
    fit,
    numeric_rank,
    prox_spectral,
    solve_oracle,
)
from lowrankpen.theory import (
    CurvatureConditionError,
    CurvatureEstimate,
    ErrorBoundReport,
    SpectralSplit,
    cone_condition,
    error_bound_general,
    lambda_completion,
    lambda_oracle_completion,
    lambda_oracle_rule,
    lambda_oracle_sensing,
    lambda_sensing,
    oracle_bound,
    oracle_condition_gap,
    probe_rsc,
    split_spectrum,
    tau_value,
    weyl_gap,
)
from lowrankpen.simlab import (
    AllAboveNu,
    GridResult,
    MixedSpectrum,
    PenaltyTemplate,
    TrialOutcome,
    TrialSpec,
    generate_ground_truth,
    holdout_split,
    raw_sample_size,
    rescale_n,
    rmse,
    run_grid,
    run_trial,
    trial_seed,
)

__version__ = "0.1.0"

__all__ = [
    "AllAboveNu",
    "CompletionDesign",
    "CurvatureConditionError",
    "CurvatureEstimate",
    "DivergenceError",
    "ErrorBoundReport",
    "FitResult",
    "GridResult",
    "MCP",
    "MixedSpectrum",
    "NUCLEAR",
    "ObservationSet",
    "PenaltySpec",
    "PenaltyTemplate",
    "RankDeficiencyError",
    "RegularityReport",
    "SCAD",
    "SensingDesign",
    "SolverConfig",
    "SpectralSplit",
    "Subspace",
    "TrialOutcome",
    "TrialSpec",
    "UnderdeterminedSystemWarning",
    "apply_adjoint",
    "apply_forward",
    "check_regularity",
    "concave_part_derivative",
    "concave_part_value",
    "cone_condition",
    "error_bound_general",
    "estimate_lipschitz",
    "fit",
    "generate_ground_truth",
    "generate_observations",
    "holdout_split",
    "lambda_completion",
    "lambda_oracle_completion",
    "lambda_oracle_rule",
    "lambda_oracle_sensing",
    "lambda_sensing",
    "loss_gradient",
    "loss_value",
    "numeric_rank",
    "oracle_bound",
    "oracle_condition_gap",
    "penalty_derivative",
    "penalty_value",
    "probe_rsc",
    "project_complement",
    "project_onto",
    "prox_spectral",
    "raw_sample_size",
    "rescale_n",
    "rmse",
    "run_grid",
    "run_trial",
    "sample_completion_design",
    "sample_sensing_design",
    "scalar_prox",
    "solve_oracle",
    "spikiness",
    "split_spectrum",
    "tau_value",
    "trial_seed",
    "weyl_gap",
]
