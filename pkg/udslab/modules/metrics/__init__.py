"""Analysis metrics package."""

from .module import (
    COSINE_SENTINEL,
    CosineProfile,
    StabilityStats,
    TraceLike,
    cosine_sim,
    identity_preservation,
    mean_without_sentinels,
    stability_stats,
    target_alignment,
    term_cosine_profile,
)

__all__ = [
    "COSINE_SENTINEL",
    "CosineProfile",
    "StabilityStats",
    "TraceLike",
    "cosine_sim",
    "identity_preservation",
    "mean_without_sentinels",
    "stability_stats",
    "target_alignment",
    "term_cosine_profile",
]
