"""Brute-force reference computations used to cross-check the implementations.

Nothing here reuses the arithmetic of the modules under test: cumulative
alphas are recomputed from the beta table, posteriors come from Gaussian
conditioning, and mixture densities are summed component by component.
Only the denoiser interface and the delta functions being checked are called.
"""

from __future__ import annotations

import math
from typing import Callable, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from ..distillers import DeltaTerms, DistillerConfig, Method, PromptPair, delta_sds, delta_uds_edit, pds_coefficients
from ..gmm_oracle import UNCONDITIONAL, Condition
from ..latent_ops import Denoiser, ddim_denoise_to_x0, ddim_invert, tweedie_x0
from ..schedule import NoiseSchedule

LogDensity = Callable[[np.ndarray], float]
DeltaFunction = Callable[..., DeltaTerms]


class ConstantDenoiser:
    """Returns the same vector for every query (degenerate input for algebraic checks)."""

    def __init__(self, value: np.ndarray) -> None:
        self.value = np.asarray(value, dtype=np.float64)

    def predict(self, x_t: np.ndarray, t: int, cond: Condition) -> np.ndarray:
        return self.value.copy()


class RoundTrip(NamedTuple):
    abs_error: float
    rel_error: float


def cumulative_alpha(sched: NoiseSchedule, t: int) -> float:
    """``prod_{s <= t} (1 - beta_s)`` recomputed from the beta table."""

    product = 1.0
    for beta in sched.betas[1 : int(t) + 1]:
        product *= 1.0 - float(beta)
    return product


def _relative(deviation: float, *arrays: np.ndarray) -> float:
    scale = max([1.0] + [float(np.max(np.abs(array))) for array in arrays])
    return deviation / scale


def fd_score(density: LogDensity, x: np.ndarray, h: float = 1e-4) -> np.ndarray:
    """Central-difference gradient of a log-density."""

    if not h > 0.0:
        raise ValueError(f"Schrittweite h muss positiv sein, erhalten: {h}")
    point = np.asarray(x, dtype=np.float64)
    grad = np.empty_like(point)
    for index in range(point.size):
        step = np.zeros_like(point)
        step[index] = h
        upper = float(density(point + step))
        lower = float(density(point - step))
        if not (math.isfinite(upper) and math.isfinite(lower)):
            raise ValueError(f"Dichte ist nicht endlich nahe Koordinate {index}")
        grad[index] = (upper - lower) / (2.0 * h)
    return grad


def gaussian_posterior_mean(m: np.ndarray, s2: float, x_t: np.ndarray, t: int, sched: NoiseSchedule) -> np.ndarray:
    """``E[x0 | x_t]`` for the prior ``N(m, s2 I)``."""

    if not s2 > 0.0:
        raise ValueError("s2 muss positiv sein")
    alpha_bar = cumulative_alpha(sched, t)
    m = np.asarray(m, dtype=np.float64)
    x_t = np.asarray(x_t, dtype=np.float64)
    return (s2 * math.sqrt(alpha_bar) * x_t + (1.0 - alpha_bar) * m) / (alpha_bar * s2 + 1.0 - alpha_bar)


def ddpm_posterior_bruteforce(x0: np.ndarray, x_t: np.ndarray, t: int, sched: NoiseSchedule) -> Tuple[np.ndarray, float]:
    """Mean and variance of ``q(x_{t-1} | x_t, x0)`` by Gaussian conditioning."""

    if int(t) < 2:
        raise ValueError("t muss mindestens 2 sein")
    prior_var = 1.0 - cumulative_alpha(sched, t - 1)
    prior_mean = math.sqrt(cumulative_alpha(sched, t - 1)) * np.asarray(x0, dtype=np.float64)
    beta = float(sched.betas[t])
    gain = math.sqrt(1.0 - beta)
    precision = 1.0 / prior_var + (1.0 - beta) / beta
    variance = 1.0 / precision
    mean = variance * (prior_mean / prior_var + gain * np.asarray(x_t, dtype=np.float64) / beta)
    return mean, variance


def mixture_log_density_bruteforce(
    x: np.ndarray,
    weights: Sequence[float],
    means: Sequence[Sequence[float]],
    variances: Sequence[Sequence[float]],
) -> float:
    """Explicit component loop with a manual max shift."""

    point = [float(value) for value in np.asarray(x, dtype=np.float64).reshape(-1)]
    logs = []
    for weight, mean, var in zip(weights, means, variances):
        total = math.log(float(weight))
        for coord, mu, sigma2 in zip(point, mean, var):
            total -= 0.5 * (math.log(2.0 * math.pi * float(sigma2)) + (coord - float(mu)) ** 2 / float(sigma2))
        logs.append(total)
    shift = max(logs)
    return shift + math.log(sum(math.exp(value - shift) for value in logs))


def _guided(denoiser: Denoiser, x_t: np.ndarray, t: int, cond: Condition, w: float) -> np.ndarray:
    uncond = np.asarray(denoiser.predict(x_t, t, UNCONDITIONAL), dtype=np.float64)
    conditional = np.asarray(denoiser.predict(x_t, t, cond), dtype=np.float64)
    return (1.0 - w) * uncond + w * conditional


def _z_latent(x0: np.ndarray, eps: np.ndarray, t: int, denoiser: Denoiser, cond: Condition, w: float, sched: NoiseSchedule) -> np.ndarray:
    alpha_bar = cumulative_alpha(sched, t)
    alpha_bar_prev = cumulative_alpha(sched, t - 1)
    x_t = math.sqrt(alpha_bar) * x0 + math.sqrt(1.0 - alpha_bar) * eps
    x_prev = math.sqrt(alpha_bar_prev) * x0 + math.sqrt(1.0 - alpha_bar_prev) * eps
    predicted = _guided(denoiser, x_t, t, cond, w)
    x0_hat = (x_t - math.sqrt(1.0 - alpha_bar) * predicted) / math.sqrt(alpha_bar)
    mean, variance = ddpm_posterior_bruteforce(x0_hat, x_t, t, sched)
    return (x_prev - mean) / math.sqrt(variance)


def pds_coeff_check(
    x0_src: np.ndarray,
    x0_tgt: np.ndarray,
    eps: np.ndarray,
    t: int,
    denoiser: Denoiser,
    conds: Tuple[Condition, Condition],
    sched: NoiseSchedule,
    *,
    w: float = 1.0,
) -> float:
    """Gap between the direct ``z_tgt - z_src`` and ``c0 * dx0 + c1 * d(guided eps)``.

    Returned as max-abs deviation divided by ``max(1, largest magnitude)``.
    """

    src, tgt = conds
    x0_src = np.asarray(x0_src, dtype=np.float64)
    x0_tgt = np.asarray(x0_tgt, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    direct = _z_latent(x0_tgt, eps, t, denoiser, tgt, w, sched) - _z_latent(x0_src, eps, t, denoiser, src, w, sched)

    alpha_bar = cumulative_alpha(sched, t)
    x_tgt = math.sqrt(alpha_bar) * x0_tgt + math.sqrt(1.0 - alpha_bar) * eps
    x_src = math.sqrt(alpha_bar) * x0_src + math.sqrt(1.0 - alpha_bar) * eps
    c0, c1 = pds_coefficients(t, sched)
    split = c0 * (x0_tgt - x0_src) + c1 * (_guided(denoiser, x_tgt, t, tgt, w) - _guided(denoiser, x_src, t, src, w))
    return _relative(float(np.max(np.abs(direct - split))), direct, split)


def _shifted_rewrite(
    x0_src: np.ndarray,
    x0_tgt: np.ndarray,
    eps: np.ndarray,
    t: int,
    denoiser: Denoiser,
    conds: Tuple[Condition, Condition],
    sched: NoiseSchedule,
    coefficient_offset: float,
) -> np.ndarray:
    src, tgt = conds
    alpha_bar = cumulative_alpha(sched, t)
    ratio = math.sqrt(1.0 - alpha_bar) / math.sqrt(alpha_bar)

    def eps_hat(x0: np.ndarray, cond: Condition) -> np.ndarray:
        x_t = math.sqrt(alpha_bar) * x0 + math.sqrt(1.0 - alpha_bar) * eps
        conditional = np.asarray(denoiser.predict(x_t, t, cond), dtype=np.float64)
        uncond = np.asarray(denoiser.predict(x_t, t, UNCONDITIONAL), dtype=np.float64)
        return conditional - (coefficient_offset + ratio) * uncond

    return (x0_tgt - x0_src) + (eps_hat(x0_tgt, tgt) - eps_hat(x0_src, src))


def _uds_edit_total(
    x0_src: np.ndarray,
    x0_tgt: np.ndarray,
    eps: np.ndarray,
    t: int,
    denoiser: Denoiser,
    conds: Tuple[Condition, Condition],
    sched: NoiseSchedule,
    w: float,
    delta_fn: DeltaFunction,
) -> np.ndarray:
    src, tgt = conds
    config = DistillerConfig(method=Method.UDS_EDIT, w=w)
    terms = delta_fn(x0_tgt, t, eps, denoiser, PromptPair(tgt=tgt, src=src), config, sched, x0_src=x0_src)
    return terms.total


def uds_rewrite_check(
    x0_src: np.ndarray,
    x0_tgt: np.ndarray,
    eps: np.ndarray,
    t: int,
    denoiser: Denoiser,
    conds: Tuple[Condition, Condition],
    sched: NoiseSchedule,
    *,
    w: float = 1.0,
    delta_fn: Optional[DeltaFunction] = None,
) -> float:
    """UDS editing delta (Tweedie) vs ``dx0 + d eps_hat`` with
    ``eps_hat = eps(y) - (1 + sqrt(1 - ab) / sqrt(ab)) eps(null)``.

    Holds exactly only for ``w = 1``; the result is relative like
    :func:`pds_coeff_check`.
    """

    x0_src = np.asarray(x0_src, dtype=np.float64)
    x0_tgt = np.asarray(x0_tgt, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    total = _uds_edit_total(x0_src, x0_tgt, eps, t, denoiser, conds, sched, w, delta_fn or delta_uds_edit)
    rewrite = _shifted_rewrite(x0_src, x0_tgt, eps, t, denoiser, conds, sched, coefficient_offset=1.0)
    return _relative(float(np.max(np.abs(total - rewrite))), total, rewrite)


def uds_rewrite_unshifted_gap(
    x0_src: np.ndarray,
    x0_tgt: np.ndarray,
    eps: np.ndarray,
    t: int,
    denoiser: Denoiser,
    conds: Tuple[Condition, Condition],
    sched: NoiseSchedule,
) -> float:
    """Same comparison with the coefficient ``sqrt(1 - ab) / sqrt(ab)`` alone.

    Zero only when the unconditional predictions of source and target agree.
    """

    x0_src = np.asarray(x0_src, dtype=np.float64)
    x0_tgt = np.asarray(x0_tgt, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    total = _uds_edit_total(x0_src, x0_tgt, eps, t, denoiser, conds, sched, 1.0, delta_uds_edit)
    rewrite = _shifted_rewrite(x0_src, x0_tgt, eps, t, denoiser, conds, sched, coefficient_offset=0.0)
    return _relative(float(np.max(np.abs(total - rewrite))), total, rewrite)


def cfg_decomposition_check(
    x0: np.ndarray,
    eps: np.ndarray,
    t: int,
    w: float,
    denoiser: Denoiser,
    cond: Condition,
    sched: NoiseSchedule,
) -> float:
    """``guided eps - eps`` vs ``recon + w * cls`` of the SDS delta (max-abs)."""

    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    terms = delta_sds(x0, t, eps, denoiser, PromptPair(tgt=cond), DistillerConfig(method=Method.SDS, w=w), sched)
    alpha_bar = cumulative_alpha(sched, t)
    x_t = math.sqrt(alpha_bar) * x0 + math.sqrt(1.0 - alpha_bar) * eps
    expected = _guided(denoiser, x_t, t, cond, w) - eps
    return float(np.max(np.abs(terms.recon + w * terms.cls - expected)))


def tweedie_gaussian_check(
    m: np.ndarray,
    s2: float,
    x_t: np.ndarray,
    t: int,
    denoiser: Denoiser,
    cond: Condition,
    sched: NoiseSchedule,
) -> float:
    """Tweedie estimate from ``denoiser`` vs the closed-form Gaussian posterior mean."""

    estimate = tweedie_x0(x_t, t, denoiser.predict(x_t, t, cond), sched)
    return float(np.max(np.abs(estimate - gaussian_posterior_mean(m, s2, x_t, t, sched))))


def ddim_roundtrip_check(
    x0: np.ndarray,
    t_target: int,
    n_steps: int,
    denoiser: Denoiser,
    cond: Condition,
    sched: NoiseSchedule,
) -> RoundTrip:
    """Invert ``x0`` to ``t_target`` and denoise back with the same grid."""

    x0 = np.asarray(x0, dtype=np.float64)
    latent = ddim_invert(x0, t_target, n_steps, denoiser, cond, sched)
    restored = ddim_denoise_to_x0(latent, t_target, n_steps, denoiser, cond, sched)
    abs_error = float(np.max(np.abs(restored - x0)))
    norm = float(np.linalg.norm(x0))
    rel_error = float(np.linalg.norm(restored - x0)) / norm if norm > 0.0 else abs_error
    return RoundTrip(abs_error=abs_error, rel_error=rel_error)


__all__ = [
    "ConstantDenoiser",
    "RoundTrip",
    "cfg_decomposition_check",
    "cumulative_alpha",
    "ddim_roundtrip_check",
    "ddpm_posterior_bruteforce",
    "fd_score",
    "gaussian_posterior_mean",
    "mixture_log_density_bruteforce",
    "pds_coeff_check",
    "tweedie_gaussian_check",
    "uds_rewrite_check",
    "uds_rewrite_unshifted_gap",
]
