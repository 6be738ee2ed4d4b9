"""Numerics and Monte Carlo checks for space-time fractional SPDEs with truncated coefficients.

The model is ``d_t^beta u = -(-Delta)^(alpha/2) u + I^(1-beta)[b(u) + sigma(u) W']``
on the line, simulated on a periodic grid.
"""

from fracspde.bounds import ModelConstants
from fracspde.coefficients import CoefficientSpec, check_assumption3, lip_n, linear_growth_const, truncate
from fracspde.config import RunConfig, load_config, parse_config
from fracspde.errors import (
    AliasingWarning,
    BoundNotAsserted,
    CertificateError,
    ConfigError,
    FracSPDEError,
    GridError,
    GridWarning,
    NumericalError,
)
from fracspde.kernel import (
    KernelTable,
    ModelParams,
    build_kernel_table,
    kernel_bounds_certificate,
    kernel_l2_norm,
    periodic_grid,
)
from fracspde.solver import Ensemble, GridSpec, build_solver_kernel, evolve, evolve_ensemble, sample_noise
from fracspde.specfun import MLEvalConfig, cstar, mittag_leffler
from fracspde.verify import (
    check_moment_bounds,
    check_tail_bounds,
    convergence_study,
    estimate_moments,
    estimate_tail,
    uniqueness_probe,
)

__version__ = "0.1.0"

__all__ = [
    "AliasingWarning",
    "BoundNotAsserted",
    "CertificateError",
    "CoefficientSpec",
    "ConfigError",
    "Ensemble",
    "FracSPDEError",
    "GridError",
    "GridSpec",
    "GridWarning",
    "KernelTable",
    "MLEvalConfig",
    "ModelConstants",
    "ModelParams",
    "NumericalError",
    "RunConfig",
    "build_kernel_table",
    "build_solver_kernel",
    "check_assumption3",
    "check_moment_bounds",
    "check_tail_bounds",
    "convergence_study",
    "cstar",
    "estimate_moments",
    "estimate_tail",
    "evolve",
    "evolve_ensemble",
    "kernel_bounds_certificate",
    "kernel_l2_norm",
    "linear_growth_const",
    "lip_n",
    "load_config",
    "mittag_leffler",
    "parse_config",
    "periodic_grid",
    "sample_noise",
    "truncate",
    "uniqueness_probe",
]
