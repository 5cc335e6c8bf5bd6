"""Solver for impulsive differential equations with state-dependent delay.

The delay is not prescribed: it satisfies its own differential law
tau'(t) = g(t, x(t), tau(t)) alongside the state equation
x'(t) = f(t, x(t), x(t - tau(t))), with impulsive state jumps at fixed
times.  The engine discretizes by freezing the delayed argument on a
uniform mesh (piecewise-constant arguments), which converges at first
order and is exact for piecewise-linear regimes; a high-accuracy
method-of-steps oracle, a-priori bounds, monotonicity certificates, and a
text format for problem definitions round out the toolkit.
"""
from .analysis import (
    ConstantsEstimate,
    MonotonicityReport,
    convergence_order,
    error_table,
    estimate_constants,
    gronwall_bound,
    monotonicity_certificate,
)
from .engine import (
    StepOutcome,
    delayed_index,
    eval_mesh_state,
    eval_tau,
    eval_x,
    eval_x_left,
    floor_to_mesh,
    mesh_index_of,
    solve,
    step_interior,
    step_with_impulse,
)
from .expressions import ParseError, evaluate, free_variables, parse_expression, to_source
from .model import (
    COMPLETED,
    END_OF_HORIZON,
    TAU_NEGATIVE,
    ErrorRow,
    FinalPoint,
    GronwallParams,
    HistoryFunction,
    ImpulseEvent,
    ImpulseRecord,
    LipschitzHints,
    MeshConfig,
    MissingHints,
    NonFiniteRhs,
    NotAMeshPoint,
    OrderEstimate,
    OutOfRange,
    ProblemSpec,
    SolveStatus,
    SolverError,
    StepSizeTooLarge,
    Trajectory,
    UnknownProblem,
    ValidationError,
    min_impulse_gap,
)
from .oracle import DenseTrajectory, integrate_reference
from .problems import (
    BUILTIN_NAMES,
    ProblemDefinition,
    builtin,
    load_problem_file,
    parse_problem,
    serialize_problem,
)

__version__ = "0.1.0"

__all__ = [
    "BUILTIN_NAMES",
    "COMPLETED",
    "ConstantsEstimate",
    "DenseTrajectory",
    "END_OF_HORIZON",
    "ErrorRow",
    "FinalPoint",
    "GronwallParams",
    "HistoryFunction",
    "ImpulseEvent",
    "ImpulseRecord",
    "LipschitzHints",
    "MeshConfig",
    "MissingHints",
    "MonotonicityReport",
    "NonFiniteRhs",
    "NotAMeshPoint",
    "OrderEstimate",
    "OutOfRange",
    "ParseError",
    "ProblemDefinition",
    "ProblemSpec",
    "SolveStatus",
    "SolverError",
    "StepOutcome",
    "StepSizeTooLarge",
    "TAU_NEGATIVE",
    "Trajectory",
    "UnknownProblem",
    "ValidationError",
    "builtin",
    "convergence_order",
    "delayed_index",
    "error_table",
    "estimate_constants",
    "eval_mesh_state",
    "eval_tau",
    "eval_x",
    "eval_x_left",
    "evaluate",
    "floor_to_mesh",
    "free_variables",
    "gronwall_bound",
    "integrate_reference",
    "load_problem_file",
    "mesh_index_of",
    "min_impulse_gap",
    "monotonicity_certificate",
    "parse_expression",
    "parse_problem",
    "serialize_problem",
    "solve",
    "step_interior",
    "step_with_impulse",
    "to_source",
]
