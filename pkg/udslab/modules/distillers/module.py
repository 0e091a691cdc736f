"""Distillation deltas with an explicit recon / classifier / identity decomposition.

Every delta returns :class:`DeltaTerms` whose ``total`` equals
``omega_t * (identity + recon + w * cls)``.  Editing methods noise the source
and the target with the same ``eps`` at the same ``t``; generation methods with
an interval build ``x_t`` and ``x_{t-c}`` from the same ``x0`` and ``eps``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, Mapping, Optional, Tuple

import numpy as np

from ...core.defaults import DEFAULT_CFG_WEIGHTS, DEFAULT_DISTILLER
from ..gmm_oracle import UNCONDITIONAL, Condition
from ..latent_ops import (
    Denoiser,
    NoisingMode,
    X0ApproxMode,
    approximate_x0,
    ddim_invert,
    stochastic_latent,
)
from ..schedule import SIGMA_FORMS, NoiseSchedule, forward_noise, posterior_coeffs


class Method(str, Enum):
    SDS = "SDS"
    DDS = "DDS"
    PDS = "PDS"
    ISM = "ISM"
    UDS_EDIT = "UDS_EDIT"
    UDS_GEN = "UDS_GEN"
    UDS_GEN_NEG = "UDS_GEN_NEG"

    @property
    def is_editing(self) -> bool:
        return self in (Method.DDS, Method.PDS, Method.UDS_EDIT)

    @property
    def uses_interval(self) -> bool:
        return self in (Method.ISM, Method.UDS_GEN, Method.UDS_GEN_NEG)

    @classmethod
    def parse(cls, value: "str | Method") -> "Method":
        try:
            return cls(str(value.value if isinstance(value, Method) else value).upper())
        except ValueError:
            allowed = ", ".join(member.value for member in cls)
            raise ValueError(f"Unbekannte Methode {value!r} (erlaubt: {allowed})") from None


class Omega(str, Enum):
    """Timestep weighting ``omega(t)`` applied to the whole delta."""

    CONSTANT = "constant"
    ONE_MINUS_ALPHA_BAR = "one_minus_alpha_bar"


INVERSION_CONDITIONS = ("unconditional", "prompt")


@dataclass(frozen=True)
class DistillerConfig:
    method: Method = Method.UDS_GEN
    w: float = 7.5
    c: int = 50
    x0_mode: X0ApproxMode = field(default_factory=X0ApproxMode.tweedie)
    noising: NoisingMode = field(default_factory=NoisingMode.forward)
    t_min: int = 20
    t_max: Optional[int] = None
    omega: Omega = Omega.CONSTANT
    inversion_condition: str = "unconditional"
    sigma_form: str = "ddpm"

    def __post_init__(self) -> None:
        object.__setattr__(self, "method", Method.parse(self.method))
        object.__setattr__(self, "omega", Omega(self.omega))
        if not math.isfinite(self.w) or self.w < 0.0:
            raise ValueError(f"CFG-Gewicht w muss >= 0 sein, erhalten: {self.w}")
        if int(self.c) < 1:
            raise ValueError(f"Intervall c muss >= 1 sein, erhalten: {self.c}")
        if int(self.t_min) < 1:
            raise ValueError(f"t_min muss >= 1 sein, erhalten: {self.t_min}")
        if self.t_max is not None and int(self.t_max) < int(self.t_min):
            raise ValueError(f"t_max={self.t_max} liegt unter t_min={self.t_min}")
        if self.inversion_condition not in INVERSION_CONDITIONS:
            raise ValueError(f"Unbekannte Inversionsbedingung: {self.inversion_condition!r}")
        if self.sigma_form not in SIGMA_FORMS:
            raise ValueError(f"Unbekannte sigma-Form: {self.sigma_form!r}")

    # ------------------------------------------------------------------
    @classmethod
    def for_method(cls, method: "str | Method", **overrides: Any) -> "DistillerConfig":
        """Defaults for ``method`` including its default CFG weight."""

        parsed = Method.parse(method)
        overrides.setdefault("w", DEFAULT_CFG_WEIGHTS[parsed.value])
        return cls(method=parsed, **overrides)

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any], *, sigma_form: str = "ddpm") -> "DistillerConfig":
        data = {**DEFAULT_DISTILLER, **raw}
        method = Method.parse(data["method"])
        weight = data.get("w")
        x0_mode = data["x0_mode"]
        noising = data["noising"]
        return cls(
            method=method,
            w=float(DEFAULT_CFG_WEIGHTS[method.value] if weight is None else weight),
            c=int(data["c"]),
            x0_mode=X0ApproxMode(str(x0_mode["kind"]), int(x0_mode["n_steps"])),
            noising=NoisingMode(str(noising["kind"]), int(noising["n_steps"])),
            t_min=int(data["t_min"]),
            t_max=None if data["t_max"] is None else int(data["t_max"]),
            omega=Omega(data["omega"]),
            inversion_condition=str(data["inversion_condition"]),
            sigma_form=sigma_form,
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "method": self.method.value,
            "w": self.w,
            "c": self.c,
            "x0_mode": {"kind": self.x0_mode.kind, "n_steps": self.x0_mode.n_steps},
            "noising": {"kind": self.noising.kind, "n_steps": self.noising.n_steps},
            "t_min": self.t_min,
            "t_max": self.t_max,
            "omega": self.omega.value,
            "inversion_condition": self.inversion_condition,
        }


@dataclass(frozen=True)
class PromptPair:
    tgt: Condition
    src: Optional[Condition] = None
    neg: Optional[Condition] = None

    def require(self, method: Method) -> None:
        if method.is_editing and self.src is None:
            raise ValueError(f"{method.value} braucht einen Quell-Prompt (src)")
        if method is Method.UDS_GEN_NEG and self.neg is None:
            raise ValueError("UDS_GEN_NEG braucht einen negativen Prompt (neg)")

    def source(self, method: Method) -> Condition:
        """Source condition of an editing method (raises when missing)."""

        if self.src is None:
            raise ValueError(f"{method.value} braucht einen Quell-Prompt (src)")
        return self.src


@dataclass(frozen=True, eq=False)
class DeltaTerms:
    """Pre-weighting terms plus the weighted ``total`` handed to the generator."""

    recon: np.ndarray
    cls: np.ndarray
    identity: np.ndarray
    total: np.ndarray
    w: float
    omega_t: float

    def reassembled(self) -> np.ndarray:
        return self.omega_t * (self.identity + self.recon + self.w * self.cls)

    def reassembly_error(self) -> float:
        """Max-abs gap between ``total`` and the weighted sum of the terms."""

        return float(np.max(np.abs(self.total - self.reassembled())))

    def scale(self) -> float:
        """Magnitude used to make reassembly tolerances relative."""

        largest = max(float(np.max(np.abs(term))) for term in (self.recon, self.cls, self.identity))
        return max(1.0, largest * max(1.0, self.w) * max(1.0, self.omega_t))


def timestep_weight(omega: Omega, t: int, sched: NoiseSchedule) -> float:
    step = sched.check_timestep(t, lower=0)
    if omega is Omega.CONSTANT:
        return 1.0
    return 1.0 - float(sched.alpha_bars[step])


def timestep_bounds(config: DistillerConfig, sched: NoiseSchedule) -> Tuple[int, int]:
    """Inclusive ``(low, high)`` range from which the optimizer samples ``t``."""

    high = sched.T if config.t_max is None else int(config.t_max)
    if high > sched.T:
        raise ValueError(f"t_max={high} überschreitet T={sched.T}")
    low = int(config.t_min)
    method = config.method
    if method.uses_interval:
        low = max(low, config.c + 1)
    if method is Method.PDS:
        low = max(low, 2)
    if config.x0_mode.kind == "ddim" and method in (Method.UDS_EDIT, Method.UDS_GEN, Method.UDS_GEN_NEG):
        offset = config.c if method.uses_interval else 0
        low = max(low, config.x0_mode.n_steps + offset)
    if low > high:
        raise ValueError(f"Kein zulässiger Zeitschritt: untere Grenze {low} > obere Grenze {high}")
    return low, high


# ----------------------------------------------------------------------
# assembly


def _terms(
    identity: np.ndarray,
    recon: np.ndarray,
    cls: np.ndarray,
    w: float,
    omega_t: float,
    total: Optional[np.ndarray] = None,
) -> DeltaTerms:
    if total is None:
        total = omega_t * (identity + recon + w * cls)
    return DeltaTerms(recon=recon, cls=cls, identity=identity, total=total, w=float(w), omega_t=float(omega_t))


def assemble_unified(delta_x0: np.ndarray, delta_cls: np.ndarray, w: float, omega_t: float, *, slot: str) -> DeltaTerms:
    """Shared UDS assembly ``omega_t * (delta_x0 + w * delta_cls)``.

    ``slot`` selects where the x0 difference is stored: ``"identity"`` for
    editing (source/target difference) or ``"recon"`` for generation
    (``t`` / ``t - c`` difference).
    """

    zero = np.zeros_like(delta_x0)
    if slot == "identity":
        return _terms(delta_x0, zero, delta_cls, w, omega_t)
    if slot == "recon":
        return _terms(zero, delta_x0, delta_cls, w, omega_t)
    raise ValueError(f"Unbekannter Slot: {slot!r}")


def _noised(
    x0: np.ndarray,
    t: int,
    eps: np.ndarray,
    cond: Condition,
    denoiser: Denoiser,
    config: DistillerConfig,
    sched: NoiseSchedule,
) -> np.ndarray:
    if config.noising.kind == "forward":
        return forward_noise(x0, t, eps, sched)
    inversion = cond if config.inversion_condition == "prompt" else UNCONDITIONAL
    return ddim_invert(x0, t, config.noising.n_steps, denoiser, inversion, sched)


def _x0_estimate(
    x_t: np.ndarray,
    t: int,
    eps_uncond: np.ndarray,
    cond: Condition,
    denoiser: Denoiser,
    config: DistillerConfig,
    sched: NoiseSchedule,
) -> np.ndarray:
    multi_cond = cond if config.inversion_condition == "prompt" else UNCONDITIONAL
    if config.x0_mode.kind == "tweedie":
        return approximate_x0(x_t, t, config.x0_mode, denoiser, sched, UNCONDITIONAL, eps_pred=eps_uncond)
    return approximate_x0(x_t, t, config.x0_mode, denoiser, sched, multi_cond)


def _checked_interval(t: int, config: DistillerConfig, sched: NoiseSchedule) -> Tuple[int, int]:
    step = sched.check_timestep(t, lower=1)
    lower = step - int(config.c)
    if lower < 1:
        raise ValueError(f"t - c = {lower} muss >= 1 sein (t={step}, c={config.c})")
    return step, lower


def _source(x0_src: Optional[np.ndarray], method: Method) -> np.ndarray:
    if x0_src is None:
        raise ValueError(f"{method.value} braucht ein Quellbild x0_src")
    return np.asarray(x0_src, dtype=np.float64)


# ----------------------------------------------------------------------
# deltas


def delta_sds(
    x0: np.ndarray,
    t: int,
    eps: np.ndarray,
    denoiser: Denoiser,
    prompts: PromptPair,
    config: DistillerConfig,
    sched: NoiseSchedule,
    x0_src: Optional[np.ndarray] = None,
) -> DeltaTerms:
    step = sched.check_timestep(t, lower=1)
    x_t = _noised(x0, step, eps, prompts.tgt, denoiser, config, sched)
    eps_uncond = denoiser.predict(x_t, step, UNCONDITIONAL)
    eps_cond = denoiser.predict(x_t, step, prompts.tgt)
    return _terms(
        np.zeros_like(eps_uncond),
        eps_uncond - np.asarray(eps, dtype=np.float64),
        eps_cond - eps_uncond,
        config.w,
        timestep_weight(config.omega, step, sched),
    )


def delta_dds(
    x0: np.ndarray,
    t: int,
    eps: np.ndarray,
    denoiser: Denoiser,
    prompts: PromptPair,
    config: DistillerConfig,
    sched: NoiseSchedule,
    x0_src: Optional[np.ndarray] = None,
) -> DeltaTerms:
    src_cond = prompts.source(Method.DDS)
    source = _source(x0_src, Method.DDS)
    step = sched.check_timestep(t, lower=1)
    x_tgt = _noised(x0, step, eps, prompts.tgt, denoiser, config, sched)
    x_src = _noised(source, step, eps, src_cond, denoiser, config, sched)
    uncond_tgt = denoiser.predict(x_tgt, step, UNCONDITIONAL)
    uncond_src = denoiser.predict(x_src, step, UNCONDITIONAL)
    cls_tgt = denoiser.predict(x_tgt, step, prompts.tgt) - uncond_tgt
    cls_src = denoiser.predict(x_src, step, src_cond) - uncond_src
    return _terms(
        np.zeros_like(uncond_tgt),
        uncond_tgt - uncond_src,
        cls_tgt - cls_src,
        config.w,
        timestep_weight(config.omega, step, sched),
    )


def pds_coefficients(t: int, sched: NoiseSchedule, sigma_form: str = "ddpm") -> Tuple[float, float]:
    """``(c0, c1)`` so that ``z_tgt - z_src = c0 * dx0 + c1 * d(guided eps)``.

    With the DDPM posterior coefficients ``c0`` vanishes up to rounding.
    """

    step = sched.check_timestep(t, lower=2)
    coeffs = posterior_coeffs(step, sched, sigma_form)
    sqrt_ab = sched.sqrt_alpha_bar(step)
    c0 = (sched.sqrt_alpha_bar(step - 1) - coeffs.psi * sqrt_ab - coeffs.partial) / coeffs.sigma
    c1 = coeffs.partial * sched.sqrt_one_minus_alpha_bar(step) / (sqrt_ab * coeffs.sigma)
    return c0, c1


def delta_pds(
    x0: np.ndarray,
    t: int,
    eps: np.ndarray,
    denoiser: Denoiser,
    prompts: PromptPair,
    config: DistillerConfig,
    sched: NoiseSchedule,
    x0_src: Optional[np.ndarray] = None,
) -> DeltaTerms:
    """z-latent difference; the terms are the ``c0``/``c1`` view of it."""

    src_cond = prompts.source(Method.PDS)
    source = _source(x0_src, Method.PDS)
    step = sched.check_timestep(t, lower=2)
    target = np.asarray(x0, dtype=np.float64)
    z_tgt = stochastic_latent(target, step, eps, denoiser, prompts.tgt, sched, w=config.w, sigma_form=config.sigma_form)
    z_src = stochastic_latent(source, step, eps, denoiser, src_cond, sched, w=config.w, sigma_form=config.sigma_form)
    omega_t = timestep_weight(config.omega, step, sched)

    c0, c1 = pds_coefficients(step, sched, config.sigma_form)
    x_tgt = forward_noise(target, step, eps, sched)
    x_src = forward_noise(source, step, eps, sched)
    uncond_tgt = denoiser.predict(x_tgt, step, UNCONDITIONAL)
    uncond_src = denoiser.predict(x_src, step, UNCONDITIONAL)
    cls_tgt = denoiser.predict(x_tgt, step, prompts.tgt) - uncond_tgt
    cls_src = denoiser.predict(x_src, step, src_cond) - uncond_src
    return _terms(
        c0 * (target - source),
        c1 * (uncond_tgt - uncond_src),
        c1 * (cls_tgt - cls_src),
        config.w,
        omega_t,
        total=omega_t * (z_tgt - z_src),
    )


def delta_ism(
    x0: np.ndarray,
    t: int,
    eps: np.ndarray,
    denoiser: Denoiser,
    prompts: PromptPair,
    config: DistillerConfig,
    sched: NoiseSchedule,
    x0_src: Optional[np.ndarray] = None,
) -> DeltaTerms:
    step, lower = _checked_interval(t, config, sched)
    x_t = _noised(x0, step, eps, prompts.tgt, denoiser, config, sched)
    x_lower = _noised(x0, lower, eps, prompts.tgt, denoiser, config, sched)
    eps_uncond = denoiser.predict(x_t, step, UNCONDITIONAL)
    eps_lower = denoiser.predict(x_lower, lower, UNCONDITIONAL)
    eps_cond = denoiser.predict(x_t, step, prompts.tgt)
    return _terms(
        np.zeros_like(eps_uncond),
        eps_uncond - eps_lower,
        eps_cond - eps_uncond,
        config.w,
        timestep_weight(config.omega, step, sched),
    )


def delta_uds_edit(
    x0: np.ndarray,
    t: int,
    eps: np.ndarray,
    denoiser: Denoiser,
    prompts: PromptPair,
    config: DistillerConfig,
    sched: NoiseSchedule,
    x0_src: Optional[np.ndarray] = None,
) -> DeltaTerms:
    src_cond = prompts.source(Method.UDS_EDIT)
    source = _source(x0_src, Method.UDS_EDIT)
    step = sched.check_timestep(t, lower=1)
    x_tgt = _noised(x0, step, eps, prompts.tgt, denoiser, config, sched)
    x_src = _noised(source, step, eps, src_cond, denoiser, config, sched)
    uncond_tgt = denoiser.predict(x_tgt, step, UNCONDITIONAL)
    uncond_src = denoiser.predict(x_src, step, UNCONDITIONAL)
    x0_tgt = _x0_estimate(x_tgt, step, uncond_tgt, prompts.tgt, denoiser, config, sched)
    x0_src_hat = _x0_estimate(x_src, step, uncond_src, src_cond, denoiser, config, sched)
    cls_tgt = denoiser.predict(x_tgt, step, prompts.tgt) - uncond_tgt
    cls_src = denoiser.predict(x_src, step, src_cond) - uncond_src
    return assemble_unified(
        x0_tgt - x0_src_hat,
        cls_tgt - cls_src,
        config.w,
        timestep_weight(config.omega, step, sched),
        slot="identity",
    )


def _uds_generation(
    x0: np.ndarray,
    t: int,
    eps: np.ndarray,
    denoiser: Denoiser,
    prompts: PromptPair,
    config: DistillerConfig,
    sched: NoiseSchedule,
    negative: Optional[Condition],
) -> DeltaTerms:
    step, lower = _checked_interval(t, config, sched)
    x_t = _noised(x0, step, eps, prompts.tgt, denoiser, config, sched)
    x_lower = _noised(x0, lower, eps, prompts.tgt, denoiser, config, sched)
    eps_uncond = denoiser.predict(x_t, step, UNCONDITIONAL)
    eps_lower = denoiser.predict(x_lower, lower, UNCONDITIONAL)
    x0_upper = _x0_estimate(x_t, step, eps_uncond, prompts.tgt, denoiser, config, sched)
    x0_lower = _x0_estimate(x_lower, lower, eps_lower, prompts.tgt, denoiser, config, sched)
    eps_cond = denoiser.predict(x_t, step, prompts.tgt)
    baseline = eps_uncond if negative is None else denoiser.predict(x_t, step, negative)
    return assemble_unified(
        x0_upper - x0_lower,
        eps_cond - baseline,
        config.w,
        timestep_weight(config.omega, step, sched),
        slot="recon",
    )


def delta_uds_gen(
    x0: np.ndarray,
    t: int,
    eps: np.ndarray,
    denoiser: Denoiser,
    prompts: PromptPair,
    config: DistillerConfig,
    sched: NoiseSchedule,
    x0_src: Optional[np.ndarray] = None,
) -> DeltaTerms:
    return _uds_generation(x0, t, eps, denoiser, prompts, config, sched, negative=None)


def delta_uds_gen_neg(
    x0: np.ndarray,
    t: int,
    eps: np.ndarray,
    denoiser: Denoiser,
    prompts: PromptPair,
    config: DistillerConfig,
    sched: NoiseSchedule,
    x0_src: Optional[np.ndarray] = None,
) -> DeltaTerms:
    """UDS generation with ``cls = eps(y) - eps(y_neg)``."""

    prompts.require(Method.UDS_GEN_NEG)
    return _uds_generation(x0, t, eps, denoiser, prompts, config, sched, negative=prompts.neg)


DeltaFunction = Callable[..., DeltaTerms]

DELTA_FUNCTIONS: Dict[Method, DeltaFunction] = {
    Method.SDS: delta_sds,
    Method.DDS: delta_dds,
    Method.PDS: delta_pds,
    Method.ISM: delta_ism,
    Method.UDS_EDIT: delta_uds_edit,
    Method.UDS_GEN: delta_uds_gen,
    Method.UDS_GEN_NEG: delta_uds_gen_neg,
}


def compute_delta(
    x0: np.ndarray,
    t: int,
    eps: np.ndarray,
    denoiser: Denoiser,
    prompts: PromptPair,
    config: DistillerConfig,
    sched: NoiseSchedule,
    x0_src: Optional[np.ndarray] = None,
) -> DeltaTerms:
    """Dispatch to the delta of ``config.method``."""

    return DELTA_FUNCTIONS[config.method](x0, t, eps, denoiser, prompts, config, sched, x0_src=x0_src)


__all__ = [
    "DELTA_FUNCTIONS",
    "DeltaTerms",
    "DistillerConfig",
    "INVERSION_CONDITIONS",
    "Method",
    "Omega",
    "PromptPair",
    "assemble_unified",
    "compute_delta",
    "delta_dds",
    "delta_ism",
    "delta_pds",
    "delta_sds",
    "delta_uds_edit",
    "delta_uds_gen",
    "delta_uds_gen_neg",
    "pds_coefficients",
    "timestep_bounds",
    "timestep_weight",
]
