"""Saddle-point optimization toolkit: problems, solvers, rate certificates.

Public surface re-exported here; see the module docstrings for the math.
"""

from .certify import (
    DIVERGENT_OR_UNKNOWN,
    RateCertificate,
    bilinear_rate_bound,
    certify_instance,
    corollary_gap,
    dgda_bilinear_eig_magnitudes,
    fit_empirical_rate,
    lmi_residual,
    scsc_alpha_sq,
    validated_sign_convention,
    verify_spectrum,
)
from .numerics import SeededRng
from .problems import (
    ProblemInstance,
    gen_bilinear,
    gen_scsc,
    grad,
    load_problem,
    problem_digest,
    saddle_distance_sq,
    save_problem,
)
from .solvers import (
    METHODS,
    SolverConfig,
    Trace,
    default_config,
    read_trace_csv,
    run,
    write_trace_csv,
)

__version__ = "0.1.0"

__all__ = [
    "DIVERGENT_OR_UNKNOWN",
    "METHODS",
    "ProblemInstance",
    "RateCertificate",
    "SeededRng",
    "SolverConfig",
    "Trace",
    "bilinear_rate_bound",
    "certify_instance",
    "corollary_gap",
    "default_config",
    "dgda_bilinear_eig_magnitudes",
    "fit_empirical_rate",
    "gen_bilinear",
    "gen_scsc",
    "grad",
    "lmi_residual",
    "load_problem",
    "problem_digest",
    "read_trace_csv",
    "run",
    "saddle_distance_sq",
    "save_problem",
    "scsc_alpha_sq",
    "validated_sign_convention",
    "verify_spectrum",
    "write_trace_csv",
    "__version__",
]
