"""Latent-space operations package."""

from .module import (
    ALPHA_BAR_FLOOR,
    Denoiser,
    NoisingMode,
    X0ApproxMode,
    approximate_x0,
    cfg_combine,
    ddim_denoise_to_x0,
    ddim_grid,
    ddim_invert,
    ddim_step,
    stochastic_latent,
    tweedie_x0,
)

__all__ = [
    "ALPHA_BAR_FLOOR",
    "Denoiser",
    "NoisingMode",
    "X0ApproxMode",
    "approximate_x0",
    "cfg_combine",
    "ddim_denoise_to_x0",
    "ddim_grid",
    "ddim_invert",
    "ddim_step",
    "stochastic_latent",
    "tweedie_x0",
]
