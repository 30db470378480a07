"""Distributed optimal control of a conserved phase-field system.

Cell-centered finite differences with zero-flux boundaries in space, backward
Euler with a convex-implicit splitting in time, exact discrete tangents and
adjoints on top of the stepper, and a projected-gradient optimizer over box
constraints. The harness module carries the independent verification probes;
the cli module exposes the whole pipeline on JSON configs.
"""

from .errors import (
    ConfigError,
    DomainEscape,
    LinearSolveDivergence,
    NewtonDivergence,
    NonZeroMean,
    OutOfDomain,
    ParseError,
    PfcError,
    RootSolveFailure,
    ShapeMismatch,
    SolverDivergence,
    SolverError,
    ValidationError,
)
from .grid import (
    Field,
    FieldNorms,
    Grid,
    TimeGrid,
    dual_norm,
    inverse_neumann,
    laplacian_neumann,
    mean,
    norms,
)
from .potential import (
    Potential,
    PotentialValues,
    SplitValues,
    eval_split,
    eval_w,
    log_double_well,
    log_linear,
    quartic_double_well,
    yosida,
)
from .problem import (
    ControlBox,
    CostSpec,
    InitialData,
    PhysicsParams,
    ProblemSpec,
    SolverOptions,
)
from .dynamics import (
    GeneralizedProblem,
    TangentSolution,
    Trajectory,
    mixture_energy,
    solve_generalized,
    solve_state,
    solve_tangent,
    step_matrix,
)
from .adjoint import (
    AdjointSolution,
    cost_state_gradient,
    cost_value,
    dj_along_tangent,
    solve_adjoint,
    terminal_conditions,
)
from .control import (
    BangBangReport,
    OptimizeOptions,
    OptimizeReport,
    bang_bang_classify,
    cost,
    lq_inner,
    lq_norm,
    optimize,
    project_box,
    random_admissible_control,
    reduced_gradient,
    stationarity_residual,
)
from .harness import (
    ProbeReport,
    energy_probe,
    fd_directional_derivative,
    fd_gradient_check,
    frechet_remainder_probe,
    lipschitz_probe,
    lipschitz_refinement_probe,
    prolong_control,
    refine_spec,
    separation_probe,
    smooth_direction,
    time_antiderivative,
    trajectory_y_norm,
    yosida_convergence_probe,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # errors
    "PfcError",
    "ConfigError",
    "ValidationError",
    "ParseError",
    "ShapeMismatch",
    "OutOfDomain",
    "NonZeroMean",
    "RootSolveFailure",
    "SolverError",
    "SolverDivergence",
    "LinearSolveDivergence",
    "NewtonDivergence",
    "DomainEscape",
    # grid
    "Grid",
    "Field",
    "TimeGrid",
    "FieldNorms",
    "laplacian_neumann",
    "mean",
    "inverse_neumann",
    "dual_norm",
    "norms",
    # potential
    "Potential",
    "PotentialValues",
    "SplitValues",
    "quartic_double_well",
    "log_double_well",
    "log_linear",
    "eval_w",
    "eval_split",
    "yosida",
    # problem
    "PhysicsParams",
    "InitialData",
    "SolverOptions",
    "CostSpec",
    "ControlBox",
    "ProblemSpec",
    # dynamics
    "GeneralizedProblem",
    "Trajectory",
    "TangentSolution",
    "solve_generalized",
    "solve_state",
    "solve_tangent",
    "mixture_energy",
    "step_matrix",
    # adjoint
    "AdjointSolution",
    "terminal_conditions",
    "solve_adjoint",
    "cost_value",
    "cost_state_gradient",
    "dj_along_tangent",
    # control
    "OptimizeOptions",
    "OptimizeReport",
    "BangBangReport",
    "cost",
    "reduced_gradient",
    "project_box",
    "stationarity_residual",
    "optimize",
    "bang_bang_classify",
    "random_admissible_control",
    "lq_inner",
    "lq_norm",
    # harness
    "ProbeReport",
    "fd_directional_derivative",
    "fd_gradient_check",
    "frechet_remainder_probe",
    "lipschitz_probe",
    "lipschitz_refinement_probe",
    "time_antiderivative",
    "yosida_convergence_probe",
    "energy_probe",
    "separation_probe",
    "trajectory_y_norm",
    "smooth_direction",
    "refine_spec",
    "prolong_control",
]
