"""Proximal bundle methods with smooth lower models and rate verification.

The pieces compose bottom-up: simplex QPs back the bundle subproblems,
which back the solver drivers, which the harness runs and audits.
"""

from .errors import (
    BundleKitError,
    ConfigError,
    InputDomainError,
    NumericError,
    OracleFailureError,
    QPNonconvergenceError,
)
from .models import (
    Bundle,
    ModelEvaluation,
    SmoothnessMisspecificationWarning,
    eval_cutting_plane,
    eval_smooth_model,
    eval_smooth_model_many,
    load_bundle,
    model_diameter,
    verify_interpolation,
    verify_lower_bound,
)
from .oracles import (
    CompositeObjective,
    LogSumExpFunction,
    MaxAffineFunction,
    QuadraticFunction,
    SmoothConvexFunction,
    eval_oracle,
    exact_prox_oracle,
    prox_exact,
)
from .problems import Problem, make_problem, parse_descriptor, format_descriptor
from .simplex_qp import SimplexQP, kkt_residual, project_simplex, solve as solve_simplex_qp
from .solvers import (
    RunResult,
    SeriousRecord,
    SolverConfig,
    TraceRecord,
    aippa_run,
    apbm_composite_run,
    apbm_run,
    check_inexactness_criterion,
    null_step_constant,
    null_step_test_smooth,
    pbm_run,
    tau_bound,
)
from .subproblems import (
    CompositeStepSolver,
    StepSolution,
    solve_classic_step,
    solve_composite_step,
    solve_smooth_step,
    verify_nonconvex_constraints,
)
from .harness import (
    ExperimentConfig,
    RateFit,
    fit_rates,
    parse_experiment_config,
    recurrence_lemma_check,
    run_experiment,
)
from .acceptance import run_acceptance

__version__ = "0.1.0"

__all__ = [
    "Bundle", "BundleKitError", "CompositeObjective", "CompositeStepSolver",
    "ConfigError", "ExperimentConfig", "InputDomainError", "LogSumExpFunction",
    "MaxAffineFunction", "ModelEvaluation", "NumericError", "OracleFailureError",
    "Problem", "QPNonconvergenceError", "QuadraticFunction", "RateFit",
    "RunResult", "SeriousRecord", "SimplexQP", "SmoothConvexFunction",
    "SmoothnessMisspecificationWarning", "SolverConfig", "StepSolution",
    "TraceRecord", "aippa_run", "apbm_composite_run", "apbm_run",
    "check_inexactness_criterion", "eval_cutting_plane", "eval_oracle",
    "eval_smooth_model", "eval_smooth_model_many", "exact_prox_oracle",
    "fit_rates", "format_descriptor", "kkt_residual", "load_bundle",
    "make_problem", "model_diameter", "null_step_constant",
    "null_step_test_smooth", "parse_descriptor", "parse_experiment_config",
    "pbm_run", "project_simplex", "prox_exact", "recurrence_lemma_check",
    "run_acceptance", "run_experiment", "solve_classic_step",
    "solve_composite_step", "solve_simplex_qp", "solve_smooth_step",
    "tau_bound", "verify_interpolation", "verify_lower_bound",
    "verify_nonconvex_constraints",
]
