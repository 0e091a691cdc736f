"""Noise schedule package."""

from .module import (
    SIGMA_FORMS,
    NoiseSchedule,
    PosteriorCoefficients,
    forward_noise,
    make_linear_schedule,
    posterior_coeffs,
)

__all__ = [
    "NoiseSchedule",
    "PosteriorCoefficients",
    "SIGMA_FORMS",
    "forward_noise",
    "make_linear_schedule",
    "posterior_coeffs",
]
