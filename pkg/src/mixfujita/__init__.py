"""Mixed local/nonlocal diffusion ``u_t = a Δu - b(-Δ)^s u + u^p``: kernels, solvers,
Dirichlet eigenproblems, blow-up diagnostics and a Fujita phase sweep."""

from .blowup import (
    BlowupSet,
    DoublingDiagnostics,
    InsufficientDataError,
    KaplanCertificate,
    KaplanSeries,
    RateFit,
    blowup_set_estimate,
    doubling_diagnostic,
    kaplan_functional,
    kaplan_time_bound,
    monotone_initial_check,
    rate_fit,
)
from .cauchy import (
    CauchyProblem,
    ComparisonResult,
    DecayFit,
    DegenerateSeriesError,
    PicardDivergedError,
    StepControls,
    SupersolutionCertificate,
    asymptotic_distance,
    comparison_check,
    decay_exponent_fit,
    linear_report,
    solve_linear,
    solve_semilinear,
    step_semilinear,
    supersolution_certificate,
)
from .dirichlet import (
    BoundedDomain,
    ConvergenceError,
    DirichletSystem,
    DomainKind,
    EigenPair,
    assemble,
    disk,
    eigen_limit_check,
    eigen_lower_bound_check,
    eigen_scaling_check,
    interval,
    principal_eigenpair,
    solve_dirichlet,
)
from .operators import (
    Field,
    GridTooSmallError,
    OperatorParams,
    SpectralGrid,
    apply_generator,
    apply_semigroup,
    bump,
    fractional_kernel,
    fujita_exponent,
    gaussian,
    gaussian_kernel,
    kernel_peak_constant,
    kernel_profile,
    mixed_kernel,
    symbol,
)
from .report import RunReport, Verdict

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
