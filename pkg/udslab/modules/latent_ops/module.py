"""Latent-space building blocks shared by all distillers.

CFG combination, Tweedie x0 estimates, deterministic DDIM stepping/inversion,
multi-step x0 approximation and the stochastic latent ``z_t`` of PDS.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Protocol

import numpy as np

from ...core.errors import NumericalAbortError
from ..gmm_oracle import UNCONDITIONAL, Condition
from ..schedule import NoiseSchedule, forward_noise, posterior_coeffs

# Tweedie divides by sqrt(alpha_bar_t); below this floor the estimate is rejected.
ALPHA_BAR_FLOOR = 1e-6


class Denoiser(Protocol):
    """Anything that predicts ``epsilon(x_t, t, cond)``."""

    def predict(self, x_t: np.ndarray, t: int, cond: Condition) -> np.ndarray:
        ...


@dataclass(frozen=True)
class X0ApproxMode:
    """How x0 is estimated: single Tweedie step or ``n_steps`` DDIM steps."""

    kind: str = "tweedie"
    n_steps: int = 1

    def __post_init__(self) -> None:
        if self.kind not in ("tweedie", "ddim"):
            raise ValueError(f"Unbekannter x0-Modus: {self.kind!r}")
        if int(self.n_steps) < 1:
            raise ValueError("n_steps muss mindestens 1 sein")

    @classmethod
    def tweedie(cls) -> "X0ApproxMode":
        return cls("tweedie", 1)

    @classmethod
    def ddim(cls, n_steps: int) -> "X0ApproxMode":
        return cls("ddim", n_steps)


@dataclass(frozen=True)
class NoisingMode:
    """How x_t is produced: forward process or DDIM inversion."""

    kind: str = "forward"
    n_steps: int = 1

    def __post_init__(self) -> None:
        if self.kind not in ("forward", "ddim_inverse"):
            raise ValueError(f"Unbekannter Verrauschungsmodus: {self.kind!r}")
        if int(self.n_steps) < 1:
            raise ValueError("n_steps muss mindestens 1 sein")

    @classmethod
    def forward(cls) -> "NoisingMode":
        return cls("forward", 1)

    @classmethod
    def ddim_inverse(cls, n_steps: int) -> "NoisingMode":
        return cls("ddim_inverse", n_steps)


def cfg_combine(eps_uncond: np.ndarray, eps_cond: np.ndarray, w: float) -> np.ndarray:
    """Classifier-free guidance: ``eps_uncond + w (eps_cond - eps_uncond)``."""

    eps_uncond = np.asarray(eps_uncond, dtype=np.float64)
    eps_cond = np.asarray(eps_cond, dtype=np.float64)
    if eps_uncond.shape != eps_cond.shape:
        raise ValueError(f"Dimensionen passen nicht: {eps_uncond.shape} vs {eps_cond.shape}")
    return eps_uncond + w * (eps_cond - eps_uncond)


def tweedie_x0(x_t: np.ndarray, t: int, eps_pred: np.ndarray, sched: NoiseSchedule) -> np.ndarray:
    """Posterior-mean estimate ``(x_t - sqrt(1 - ab) eps) / sqrt(ab)``."""

    step = sched.check_timestep(t, lower=0)
    alpha_bar = float(sched.alpha_bars[step])
    if alpha_bar < ALPHA_BAR_FLOOR:
        raise ValueError(f"alpha_bar_{step}={alpha_bar:.3e} liegt unter der Schranke {ALPHA_BAR_FLOOR}")
    x_t = np.asarray(x_t, dtype=np.float64)
    eps_pred = np.asarray(eps_pred, dtype=np.float64)
    if x_t.shape != eps_pred.shape:
        raise ValueError(f"Dimensionen passen nicht: x_t {x_t.shape}, eps {eps_pred.shape}")
    return (x_t - math.sqrt(1.0 - alpha_bar) * eps_pred) / math.sqrt(alpha_bar)


def _ddim_transfer(
    x_t: np.ndarray,
    t: int,
    t_next: int,
    eps_pred: np.ndarray,
    sched: NoiseSchedule,
) -> np.ndarray:
    if t_next == t:
        return np.array(x_t, dtype=np.float64, copy=True)
    x0_hat = tweedie_x0(x_t, t, eps_pred, sched)
    eps = np.asarray(eps_pred, dtype=np.float64)
    return sched.sqrt_alpha_bar(t_next) * x0_hat + sched.sqrt_one_minus_alpha_bar(t_next) * eps


def ddim_step(
    x_t: np.ndarray,
    t: int,
    t_prev: int,
    eps_pred: np.ndarray,
    sched: NoiseSchedule,
) -> np.ndarray:
    """Deterministic DDIM update from ``t`` down to ``t_prev`` (identity if equal)."""

    step = sched.check_timestep(t, lower=0)
    target = sched.check_timestep(t_prev, lower=0)
    if target > step:
        raise ValueError(f"t_prev={target} muss kleiner als t={step} sein")
    return _ddim_transfer(x_t, step, target, eps_pred, sched)


def ddim_grid(t_target: int, n_steps: int) -> List[int]:
    """Evenly spaced integer grid ``0 -> t_target`` with both endpoints (floor on ties)."""

    if int(n_steps) < 1:
        raise ValueError("n_steps muss mindestens 1 sein")
    if int(t_target) < 0:
        raise ValueError("t_target darf nicht negativ sein")
    points = np.floor(np.linspace(0.0, float(t_target), int(n_steps) + 1)).astype(int)
    points[0], points[-1] = 0, int(t_target)
    return [int(point) for point in points]


def _checked(x: np.ndarray, what: str, step: int) -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise NumericalAbortError(f"{what} lieferte nicht-endliche Werte bei t={step}")
    return x


def ddim_invert(
    x0: np.ndarray,
    t_target: int,
    n_steps: int,
    denoiser: Denoiser,
    cond: Condition,
    sched: NoiseSchedule,
) -> np.ndarray:
    """Run the DDIM recurrence upward on ``ddim_grid(t_target, n_steps)``."""

    sched.check_timestep(t_target, lower=0)
    grid = ddim_grid(t_target, n_steps)
    x = np.array(x0, dtype=np.float64, copy=True)
    for current, upper in zip(grid[:-1], grid[1:]):
        if upper == current:
            continue
        eps = _checked(denoiser.predict(x, current, cond), "DDIM-Inversion", current)
        x = _checked(_ddim_transfer(x, current, upper, eps, sched), "DDIM-Inversion", upper)
    return x


def ddim_denoise_to_x0(
    x_t: np.ndarray,
    t: int,
    n_steps: int,
    denoiser: Denoiser,
    cond: Condition,
    sched: NoiseSchedule,
) -> np.ndarray:
    """Run the DDIM recurrence downward from ``t`` to 0 on the reversed grid."""

    sched.check_timestep(t, lower=0)
    grid = ddim_grid(t, n_steps)[::-1]
    x = np.array(x_t, dtype=np.float64, copy=True)
    for current, lower in zip(grid[:-1], grid[1:]):
        if lower == current:
            continue
        eps = _checked(denoiser.predict(x, current, cond), "DDIM-Entrauschen", current)
        x = _checked(ddim_step(x, current, lower, eps, sched), "DDIM-Entrauschen", lower)
    return x


def approximate_x0(
    x_t: np.ndarray,
    t: int,
    mode: X0ApproxMode,
    denoiser: Denoiser,
    sched: NoiseSchedule,
    cond: Condition = UNCONDITIONAL,
    eps_pred: np.ndarray | None = None,
) -> np.ndarray:
    """x0 estimate per ``mode``; ``eps_pred`` short-cuts the Tweedie prediction."""

    if mode.kind == "tweedie":
        eps = denoiser.predict(x_t, t, cond) if eps_pred is None else eps_pred
        return tweedie_x0(x_t, t, eps, sched)
    if mode.n_steps > t:
        raise ValueError(f"DDIM-Gitter mit {mode.n_steps} Schritten ist bei t={t} nicht umsetzbar")
    return ddim_denoise_to_x0(x_t, t, mode.n_steps, denoiser, cond, sched)


def stochastic_latent(
    x0: np.ndarray,
    t: int,
    eps: np.ndarray,
    denoiser: Denoiser,
    cond: Condition,
    sched: NoiseSchedule,
    *,
    w: float = 1.0,
    sigma_form: str = "ddpm",
) -> np.ndarray:
    """``z_t = (x_{t-1} - mu(x_t, y)) / sigma_t`` with shared ``eps`` (PDS convention).

    ``x_{t-1}`` and ``x_t`` are both built from ``x0`` and the same ``eps`` by the
    forward process; the posterior mean uses the conditional prediction, guided
    with weight ``w`` (``w == 1`` is the plain conditional prediction).
    """

    step = sched.check_timestep(t, lower=2)
    coeffs = posterior_coeffs(step, sched, sigma_form)
    x_t = forward_noise(x0, step, eps, sched)
    x_prev = forward_noise(x0, step - 1, eps, sched)
    eps_cond = denoiser.predict(x_t, step, cond)
    if w != 1.0:
        eps_cond = cfg_combine(denoiser.predict(x_t, step, UNCONDITIONAL), eps_cond, w)
    x0_hat = tweedie_x0(x_t, step, eps_cond, sched)
    mean = coeffs.partial * x0_hat + coeffs.psi * x_t
    return (x_prev - mean) / coeffs.sigma


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
