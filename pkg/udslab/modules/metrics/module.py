"""Gradient-stability statistics, term cosines and editing-quality proxies."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Protocol, Sequence

import numpy as np

from ..gmm_oracle import Condition, ConditionRegistry

COSINE_SENTINEL = -2.0
NORM_FLOOR = 1e-12


class TraceLike(Protocol):
    grad_norm_normalized: float
    cos_recon: float
    cos_cls: float
    cos_identity: float


@dataclass(frozen=True)
class StabilityStats:
    mean: float
    std: float
    ratio: float
    count: int


@dataclass(frozen=True)
class CosineProfile:
    """Tail means of the term cosines (sentinels excluded)."""

    recon: float
    cls: float
    identity: float


def cosine_sim(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity; ``-2`` when either vector is (numerically) zero."""

    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise ValueError(f"Dimensionen passen nicht: {a.shape} vs {b.shape}")
    norm_a = float(np.linalg.norm(a))
    norm_b = float(np.linalg.norm(b))
    if norm_a < NORM_FLOOR or norm_b < NORM_FLOOR:
        return COSINE_SENTINEL
    return float(np.clip(np.dot(a, b) / (norm_a * norm_b), -1.0, 1.0))


def mean_without_sentinels(values: Iterable[float]) -> float:
    kept = [float(value) for value in values if float(value) != COSINE_SENTINEL]
    if not kept:
        return COSINE_SENTINEL
    return float(np.mean(kept))


def _tail(trace: Sequence[TraceLike], fraction: float, name: str) -> Sequence[TraceLike]:
    if not trace:
        raise ValueError("Leere Spur")
    if not 0.0 <= fraction < 1.0:
        raise ValueError(f"{name} muss in [0, 1) liegen, erhalten: {fraction}")
    start = int(math.floor(len(trace) * fraction))
    tail = trace[start:]
    if not tail:
        raise ValueError("Nach dem Abschneiden bleiben keine Einträge übrig")
    return tail


def stability_stats(trace: Sequence[TraceLike], burn_in_fraction: float = 0.2) -> StabilityStats:
    """Mean, standard deviation and max/min ratio of the normalised grad norm."""

    tail = _tail(trace, burn_in_fraction, "burn_in_fraction")
    values = np.array([record.grad_norm_normalized for record in tail], dtype=np.float64)
    smallest = float(values.min())
    ratio = float(values.max()) / smallest if smallest > 0.0 else math.inf
    return StabilityStats(mean=float(values.mean()), std=float(values.std()), ratio=ratio, count=int(values.size))


def term_cosine_profile(trace: Sequence[TraceLike], tail_fraction: float = 0.2) -> CosineProfile:
    """Cosine means over the last ``tail_fraction`` of the trace."""

    if not 0.0 < tail_fraction <= 1.0:
        raise ValueError(f"tail_fraction muss in (0, 1] liegen, erhalten: {tail_fraction}")
    tail = _tail(trace, 1.0 - tail_fraction, "tail_fraction") if tail_fraction < 1.0 else trace
    if not tail:
        raise ValueError("Leere Spur")
    return CosineProfile(
        recon=mean_without_sentinels(record.cos_recon for record in tail),
        cls=mean_without_sentinels(record.cos_cls for record in tail),
        identity=mean_without_sentinels(record.cos_identity for record in tail),
    )


def identity_preservation(x_edit: np.ndarray, x_src: np.ndarray, frozen_dims: Sequence[int]) -> float:
    """RMS displacement over the dimensions an edit should leave alone."""

    x_edit = np.asarray(x_edit, dtype=np.float64)
    x_src = np.asarray(x_src, dtype=np.float64)
    if x_edit.shape != x_src.shape:
        raise ValueError(f"Dimensionen passen nicht: {x_edit.shape} vs {x_src.shape}")
    dims = list(frozen_dims)
    if not dims:
        raise ValueError("frozen_dims darf nicht leer sein")
    if any(dim < 0 or dim >= x_edit.size for dim in dims):
        raise ValueError(f"Ungültige Dimensionen in frozen_dims: {dims}")
    diff = x_edit[dims] - x_src[dims]
    return float(np.sqrt(np.mean(diff * diff)))


def target_alignment(x: np.ndarray, tgt: Condition, registry: ConditionRegistry) -> float:
    """Exact log-density of ``x`` under the target mixture (t = 0)."""

    return float(registry.resolve(tgt).log_density(np.asarray(x, dtype=np.float64)))


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
