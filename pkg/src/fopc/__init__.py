"""First-order prediction-correction tracking for time-varying convex problems."""

from .bounds import (
    BoundReport,
    Regime,
    certify,
    contraction_rates,
    error_envelope,
    local_region,
    recursion_coefficients,
    taylor_error_bounds,
    tau0_constrained,
    tau0_unconstrained,
)
from .oracle import TrackingRun, oracle_optimizer, reference_trajectory
from .problem import (
    Ball,
    Box,
    FunctionProblem,
    SamplingGrid,
    SmoothnessConstants,
    TimeVaryingProblem,
    WholeSpace,
    project,
    quadratic_problem,
    verify_problem,
)
from .solvers import (
    DivergenceError,
    PredictionState,
    SolverConfig,
    approx_mixed_derivative,
    correct,
    predict_constrained,
    predict_exact,
    predict_unconstrained,
    run_cfopc,
    run_ufopc,
)

__version__ = "0.1.0"

__all__ = [
    "approx_mixed_derivative",
    "Ball",
    "BoundReport",
    "Box",
    "certify",
    "contraction_rates",
    "correct",
    "DivergenceError",
    "error_envelope",
    "FunctionProblem",
    "local_region",
    "oracle_optimizer",
    "predict_constrained",
    "predict_exact",
    "predict_unconstrained",
    "PredictionState",
    "project",
    "quadratic_problem",
    "recursion_coefficients",
    "reference_trajectory",
    "Regime",
    "run_cfopc",
    "run_ufopc",
    "SamplingGrid",
    "SmoothnessConstants",
    "SolverConfig",
    "tau0_constrained",
    "tau0_unconstrained",
    "taylor_error_bounds",
    "TimeVaryingProblem",
    "TrackingRun",
    "verify_problem",
    "WholeSpace",
]
