"""Independent reference computations and the verification suite."""

from .module import (
    ConstantDenoiser,
    RoundTrip,
    cfg_decomposition_check,
    cumulative_alpha,
    ddim_roundtrip_check,
    ddpm_posterior_bruteforce,
    fd_score,
    gaussian_posterior_mean,
    mixture_log_density_bruteforce,
    pds_coeff_check,
    tweedie_gaussian_check,
    uds_rewrite_check,
    uds_rewrite_unshifted_gap,
)
from .suite import FAULTS, CheckResult, VerificationReport, VerificationSuite, default_registry

__all__ = [
    "CheckResult",
    "ConstantDenoiser",
    "FAULTS",
    "RoundTrip",
    "VerificationReport",
    "VerificationSuite",
    "cfg_decomposition_check",
    "cumulative_alpha",
    "ddim_roundtrip_check",
    "ddpm_posterior_bruteforce",
    "default_registry",
    "fd_score",
    "gaussian_posterior_mean",
    "mixture_log_density_bruteforce",
    "pds_coeff_check",
    "tweedie_gaussian_check",
    "uds_rewrite_check",
    "uds_rewrite_unshifted_gap",
]
