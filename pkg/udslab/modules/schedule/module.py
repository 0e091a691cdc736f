"""Noise schedule: time discretisation, forward noising and posterior coefficients.

All tables are stored with index 0 included (``alpha_bars[0] == 1``) so that
``t - 1`` lookups never need a special case.  ``betas[0]`` is a placeholder 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ...core.logging_manager import get_logger

SIGMA_FORMS = ("ddpm", "literal")
TERMINAL_ALPHA_BAR_MAX = 1e-3


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    """Immutable ``{beta_t, alpha_t, alpha_bar_t}`` tables for ``t = 0..T``."""

    T: int
    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray
    terminal_alpha_bar_max: float = TERMINAL_ALPHA_BAR_MAX

    def __post_init__(self) -> None:
        if self.T < 1:
            raise ValueError(f"T muss positiv sein, erhalten: {self.T}")
        for name in ("betas", "alphas", "alpha_bars"):
            table = np.array(getattr(self, name), dtype=np.float64)
            if table.shape != (self.T + 1,):
                raise ValueError(f"{name} braucht {self.T + 1} Einträge, erhalten: {table.shape}")
            if not np.all(np.isfinite(table)):
                raise ValueError(f"{name} enthält nicht-endliche Werte")
            table.setflags(write=False)
            object.__setattr__(self, name, table)

        if self.alpha_bars[0] != 1.0:
            raise ValueError("alpha_bar_0 muss exakt 1 sein")
        if np.any(np.diff(self.alpha_bars) >= 0.0):
            raise ValueError("alpha_bar muss streng monoton fallen")
        recurrence = self.alpha_bars[:-1] * self.alphas[1:]
        if not np.allclose(recurrence, self.alpha_bars[1:], rtol=1e-12, atol=0.0):
            raise ValueError("alpha_bar_t = alpha_bar_(t-1) * alpha_t ist verletzt")

    # ------------------------------------------------------------------
    @property
    def terminal_ok(self) -> bool:
        """``True`` when alpha_bar_T is below the terminal bound (proxy for 0)."""

        return bool(self.alpha_bars[self.T] < self.terminal_alpha_bar_max)

    # ------------------------------------------------------------------
    def check_timestep(self, t: int, *, lower: int = 1) -> int:
        """Return ``t`` as ``int`` or raise when it lies outside ``[lower, T]``."""

        if isinstance(t, (bool, np.bool_)) or not isinstance(t, (int, np.integer)):
            raise ValueError(f"Zeitschritt muss ganzzahlig sein, erhalten: {t!r}")
        step = int(t)
        if step < lower or step > self.T:
            raise ValueError(f"Zeitschritt {step} liegt außerhalb von [{lower}, {self.T}]")
        return step

    # ------------------------------------------------------------------
    def sqrt_alpha_bar(self, t: int) -> float:
        return math.sqrt(float(self.alpha_bars[t]))

    def sqrt_one_minus_alpha_bar(self, t: int) -> float:
        return math.sqrt(1.0 - float(self.alpha_bars[t]))


class PosteriorCoefficients(NamedTuple):
    """Coefficients of the DDPM posterior mean ``partial * x0 + psi * x_t``."""

    partial: float
    psi: float
    sigma: float


def make_linear_schedule(
    T: int = 1000,
    beta_start: float = 0.00085,
    beta_end: float = 0.012,
    *,
    terminal_alpha_bar_max: float = TERMINAL_ALPHA_BAR_MAX,
) -> NoiseSchedule:
    """Linear betas from ``beta_start`` to ``beta_end`` (both inclusive)."""

    if isinstance(T, bool) or not isinstance(T, (int, np.integer)) or T < 2:
        raise ValueError(f"T muss eine ganze Zahl >= 2 sein, erhalten: {T!r}")
    for name, value in (("beta_start", beta_start), ("beta_end", beta_end)):
        if not math.isfinite(value):
            raise ValueError(f"{name} ist nicht endlich: {value}")
    if not 0.0 < beta_start <= beta_end < 1.0:
        raise ValueError(
            f"Erwartet 0 < beta_start <= beta_end < 1, erhalten: {beta_start}, {beta_end}"
        )

    betas = np.zeros(int(T) + 1, dtype=np.float64)
    betas[1:] = np.linspace(beta_start, beta_end, int(T), dtype=np.float64)
    alphas = 1.0 - betas
    alpha_bars = np.empty_like(alphas)
    alpha_bars[0] = 1.0
    for step in range(1, int(T) + 1):
        alpha_bars[step] = alpha_bars[step - 1] * alphas[step]

    schedule = NoiseSchedule(
        T=int(T),
        betas=betas,
        alphas=alphas,
        alpha_bars=alpha_bars,
        terminal_alpha_bar_max=terminal_alpha_bar_max,
    )
    logger = get_logger("modules.schedule")
    logger.debug(
        "Lineare Rauschtabelle erzeugt: T=%d, beta=%.6g..%.6g, alpha_bar_T=%.3e",
        T,
        beta_start,
        beta_end,
        schedule.alpha_bars[-1],
    )
    if not schedule.terminal_ok:
        logger.warning(
            "alpha_bar_T=%.3e liegt nicht unter der Schranke %.1e (Endrauschen nicht vollständig).",
            schedule.alpha_bars[-1],
            terminal_alpha_bar_max,
        )
    return schedule


def forward_noise(x0: np.ndarray, t: int, eps: np.ndarray, sched: NoiseSchedule) -> np.ndarray:
    """``x_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps``."""

    step = sched.check_timestep(t, lower=0)
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if x0.shape != eps.shape:
        raise ValueError(f"Dimensionen passen nicht: x0 {x0.shape}, eps {eps.shape}")
    return sched.sqrt_alpha_bar(step) * x0 + sched.sqrt_one_minus_alpha_bar(step) * eps


def posterior_coeffs(t: int, sched: NoiseSchedule, sigma_form: str = "ddpm") -> PosteriorCoefficients:
    """Posterior coefficients of ``q(x_{t-1} | x_t, x0)`` for ``2 <= t <= T``.

    ``sigma_form="literal"`` returns ``(1 - alpha_bar_{t-1}) / (1 - alpha_t) * beta_t``
    instead of the DDPM standard deviation, for side-by-side comparison.
    """

    step = sched.check_timestep(t, lower=2)
    if sigma_form not in SIGMA_FORMS:
        raise ValueError(f"Unbekannte sigma-Form: {sigma_form!r}")

    beta = float(sched.betas[step])
    alpha = float(sched.alphas[step])
    alpha_bar = float(sched.alpha_bars[step])
    alpha_bar_prev = float(sched.alpha_bars[step - 1])

    partial = math.sqrt(alpha_bar_prev) * beta / (1.0 - alpha_bar)
    psi = math.sqrt(alpha) * (1.0 - alpha_bar_prev) / (1.0 - alpha_bar)
    if sigma_form == "ddpm":
        sigma = math.sqrt((1.0 - alpha_bar_prev) / (1.0 - alpha_bar) * beta)
    else:
        sigma = (1.0 - alpha_bar_prev) / (1.0 - alpha) * beta
    return PosteriorCoefficients(partial=partial, psi=psi, sigma=sigma)


__all__ = [
    "NoiseSchedule",
    "PosteriorCoefficients",
    "SIGMA_FORMS",
    "TERMINAL_ALPHA_BAR_MAX",
    "forward_noise",
    "make_linear_schedule",
    "posterior_coeffs",
]
