"""Adam with bias correction, shared by the distillation loop and denoiser training."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ...core.errors import NumericalAbortError


@dataclass(frozen=True)
class AdamConfig:
    """Hyperparameters; defaults are the frozen values used for every method."""

    lr: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.99
    eps_hat: float = 1e-8

    def __post_init__(self) -> None:
        if self.lr < 0.0:
            raise ValueError("Lernrate darf nicht negativ sein")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("beta1 und beta2 müssen in [0, 1) liegen")
        if self.eps_hat <= 0.0:
            raise ValueError("eps_hat muss positiv sein")


@dataclass(frozen=True)
class AdamState:
    """Parameters plus first/second moments after ``step`` updates."""

    theta: np.ndarray
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def initial(cls, theta: np.ndarray) -> "AdamState":
        theta = np.array(theta, dtype=np.float64, copy=True)
        return cls(theta=theta, m=np.zeros_like(theta), v=np.zeros_like(theta), step=0)


def adam_step(
    state: AdamState,
    grad: np.ndarray,
    lr: float,
    beta1: float,
    beta2: float,
    eps_hat: float,
) -> AdamState:
    """One bias-corrected Adam update; returns a new state."""

    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != state.theta.shape:
        raise ValueError(f"Gradient {grad.shape} passt nicht zu theta {state.theta.shape}")
    if not np.all(np.isfinite(grad)):
        raise NumericalAbortError("Gradient enthält nicht-endliche Werte", step=state.step + 1)

    step = state.step + 1
    m = beta1 * state.m + (1.0 - beta1) * grad
    v = beta2 * state.v + (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1**step)
    v_hat = v / (1.0 - beta2**step)
    theta = state.theta - lr * m_hat / (np.sqrt(v_hat) + eps_hat)
    return AdamState(theta=theta, m=m, v=v, step=step)


def adam_update(state: AdamState, grad: np.ndarray, config: AdamConfig) -> AdamState:
    return adam_step(state, grad, config.lr, config.beta1, config.beta2, config.eps_hat)


__all__ = ["AdamConfig", "AdamState", "adam_step", "adam_update"]
