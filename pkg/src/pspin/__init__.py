"""Two-time dynamics of spherical mixed p-spin glasses in a field."""
from .model import (
    HardConstraint,
    MixtureSpec,
    ModelParams,
    PolynomialConfinement,
    SoftConstraint,
    SolutionBundle,
    TwoTimeField,
    f_eval,
    nu_eval,
    psi_eval,
)
from .integrator import (
    BlowUpError,
    IntegratorConfig,
    InvariantReport,
    ResourceError,
    check_invariants,
    integrate,
    integrate_hard,
    integrate_soft,
    rescale,
    two_time_slice,
)

__all__ = [
    "BlowUpError", "HardConstraint", "IntegratorConfig", "InvariantReport", "MixtureSpec",
    "ModelParams", "PolynomialConfinement", "ResourceError", "SoftConstraint", "SolutionBundle",
    "TwoTimeField", "check_invariants", "f_eval", "integrate", "integrate_hard", "integrate_soft",
    "nu_eval", "psi_eval", "rescale", "two_time_slice",
]
from .series import (
    NonCrossingInvolution,
    SeriesConfig,
    TruncationError,
    catalan,
    enumerate_nc,
    h_series,
    response_from_series,
)
from .fdt import (
    FdtSolution,
    PhasePoint,
    beta_c,
    fit_decay,
    phase_sweep,
    solve_cfdt,
    solve_fdt,
    solve_qfdt,
)
from .langevin import McConfig, TrajectoryStats, run_mc, sample_disorder, simulate
from .config import ConfigError, RunConfig, load_config, parse_config

__all__ += [
    "NonCrossingInvolution", "SeriesConfig", "TruncationError", "catalan", "enumerate_nc",
    "h_series", "response_from_series", "FdtSolution", "PhasePoint", "beta_c", "fit_decay",
    "phase_sweep", "solve_cfdt", "solve_fdt", "solve_qfdt", "McConfig", "TrajectoryStats",
    "run_mc", "sample_disorder", "simulate", "ConfigError", "RunConfig", "load_config",
    "parse_config",
]
