"""Analytic Gaussian-mixture oracle package."""

from .module import (
    UNCONDITIONAL,
    AnalyticDenoiser,
    Condition,
    ConditionKind,
    ConditionRegistry,
    GaussianMixture,
    epsilon_star,
    marginal_params,
    registry_from_entries,
    sample_x0,
)

__all__ = [
    "AnalyticDenoiser",
    "Condition",
    "ConditionKind",
    "ConditionRegistry",
    "GaussianMixture",
    "UNCONDITIONAL",
    "epsilon_star",
    "marginal_params",
    "registry_from_entries",
    "sample_x0",
]
