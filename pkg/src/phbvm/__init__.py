"""Energy- and Casimir-conserving PHBVM(k, s) integrators for Poisson systems."""

from .casimir import (
    CasimirCorrection,
    DegenerateCasimirDirection,
    alpha_update,
    casimir_fourier_coeffs,
    default_skew_matrix,
    step_with_casimir,
)
from .core import (
    ConvergenceError,
    SolverConfig,
    StageState,
    StepResult,
    residual,
    rho_hat,
    solve_blended,
    solve_fixed_point,
    solve_newton,
    step,
)
from .driver import (
    ExperimentRecord,
    GrowthSeries,
    StepFailure,
    Trajectory,
    convergence_table,
    growth_study,
    integrate,
    periodic_error,
)
from .legendre import QuadratureRule, eval_legendre, eval_legendre_antiderivative, gauss_rule
from .problems import (
    PRESETS,
    Casimir,
    DomainError,
    PoissonSystem,
    ProblemPreset,
    harmonic_oscillator,
    jacobian,
    lotka_volterra_2d,
    lotka_volterra_3d,
    preset,
    vector_field,
)
from .tableau import MethodTableau, build_tableau, min_modulus_eigenvalue

__version__ = "0.1.0"

__all__ = [
    "Casimir",
    "CasimirCorrection",
    "ConvergenceError",
    "DegenerateCasimirDirection",
    "DomainError",
    "ExperimentRecord",
    "GrowthSeries",
    "MethodTableau",
    "PRESETS",
    "PoissonSystem",
    "ProblemPreset",
    "QuadratureRule",
    "SolverConfig",
    "StageState",
    "StepFailure",
    "StepResult",
    "Trajectory",
    "alpha_update",
    "build_tableau",
    "casimir_fourier_coeffs",
    "convergence_table",
    "default_skew_matrix",
    "eval_legendre",
    "eval_legendre_antiderivative",
    "gauss_rule",
    "growth_study",
    "harmonic_oscillator",
    "integrate",
    "jacobian",
    "lotka_volterra_2d",
    "lotka_volterra_3d",
    "min_modulus_eigenvalue",
    "periodic_error",
    "preset",
    "residual",
    "rho_hat",
    "solve_blended",
    "solve_fixed_point",
    "solve_newton",
    "step",
    "step_with_casimir",
    "vector_field",
]
