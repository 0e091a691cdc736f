"""Analytic Gaussian-mixture denoiser: exact conditional epsilon predictions.

Prompts select diagonal Gaussian mixtures; the unconditional distribution is the
prior-weighted union of all registered prompt mixtures.  ``epsilon_star`` is the
optimal denoiser ``-sqrt(1 - alpha_bar_t) * grad log p_t(x_t | cond)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp, softmax

from ..schedule import NoiseSchedule

LOG_TWO_PI = math.log(2.0 * math.pi)


@dataclass(frozen=True, eq=False)
class GaussianMixture:
    """Diagonal Gaussian mixture with ``K`` components in dimension ``d``."""

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self) -> None:
        weights = np.array(self.weights, dtype=np.float64).reshape(-1)
        means = np.array(self.means, dtype=np.float64)
        variances = np.array(self.variances, dtype=np.float64)
        if means.ndim == 1:
            means = means[None, :]
        try:
            variances = np.broadcast_to(variances, means.shape).copy()
        except ValueError:
            raise ValueError(
                f"Varianzen {variances.shape} passen nicht zu den Mittelwerten {means.shape}"
            ) from None
        if weights.shape[0] != means.shape[0] or variances.shape != means.shape:
            raise ValueError(
                f"Komponenten passen nicht zusammen: weights {weights.shape}, "
                f"means {means.shape}, variances {variances.shape}"
            )
        if means.shape[0] == 0 or means.shape[1] == 0:
            raise ValueError("Eine Mischung braucht mindestens eine Komponente und Dimension 1")
        if not (np.all(np.isfinite(weights)) and np.all(np.isfinite(means)) and np.all(np.isfinite(variances))):
            raise ValueError("Mischungsparameter müssen endlich sein")
        if np.any(weights <= 0.0):
            raise ValueError("Gewichte müssen positiv sein")
        if abs(float(weights.sum()) - 1.0) > 1e-12:
            raise ValueError(f"Gewichte summieren sich zu {weights.sum():.15g} statt 1")
        if np.any(variances <= 0.0):
            raise ValueError("Varianzen müssen strikt positiv sein")
        for table in (weights, means, variances):
            table.setflags(write=False)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "variances", variances)

    # ------------------------------------------------------------------
    @classmethod
    def from_components(
        cls, components: Sequence[Tuple[float, Sequence[float], Sequence[float]]]
    ) -> "GaussianMixture":
        """Build from ``(weight, mean, diag_var)`` triples."""

        weights = [float(weight) for weight, _, _ in components]
        means = [list(mean) for _, mean, _ in components]
        dim = len(means[0]) if means else 0
        variances = [np.broadcast_to(np.asarray(var, dtype=np.float64), (dim,)) for _, _, var in components]
        return cls(weights=np.array(weights), means=np.array(means), variances=np.array(variances))

    @classmethod
    def single(cls, mean: Sequence[float], var: float | Sequence[float]) -> "GaussianMixture":
        mean_arr = np.asarray(mean, dtype=np.float64).reshape(1, -1)
        var_arr = np.broadcast_to(np.asarray(var, dtype=np.float64), mean_arr.shape).copy()
        return cls(weights=np.ones(1), means=mean_arr, variances=var_arr)

    @property
    def dim(self) -> int:
        return int(self.means.shape[1])

    @property
    def n_components(self) -> int:
        return int(self.means.shape[0])

    # ------------------------------------------------------------------
    def component_log_densities(self, x: np.ndarray) -> np.ndarray:
        """``log w_k + log N(x; m_k, v_k)`` with shape ``(n, K)`` for ``x`` of shape ``(n, d)``."""

        diffs = x[:, None, :] - self.means[None, :, :]
        maha = np.sum(diffs * diffs / self.variances[None, :, :], axis=2)
        log_det = np.sum(np.log(self.variances), axis=1)
        return np.log(self.weights)[None, :] - 0.5 * (maha + log_det[None, :] + self.dim * LOG_TWO_PI)

    def log_density(self, x: np.ndarray) -> np.ndarray | float:
        """Exact mixture log-density; scalar for a single vector."""

        batch, single = _as_batch(x, self.dim)
        values = logsumexp(self.component_log_densities(batch), axis=1)
        return float(values[0]) if single else values

    def score(self, x: np.ndarray) -> np.ndarray:
        """``grad_x log p(x)`` via log-sum-exp stabilised responsibilities."""

        batch, single = _as_batch(x, self.dim)
        responsibilities = softmax(self.component_log_densities(batch), axis=1)
        natural = (self.means[None, :, :] - batch[:, None, :]) / self.variances[None, :, :]
        grad = np.einsum("nk,nkd->nd", responsibilities, natural)
        return grad[0] if single else grad

    def sample(self, rng: np.random.Generator, n: Optional[int] = None) -> np.ndarray:
        """Ancestral samples; a single vector when ``n`` is ``None``."""

        count = 1 if n is None else int(n)
        picks = rng.choice(self.n_components, size=count, p=self.weights)
        noise = rng.standard_normal((count, self.dim))
        samples = self.means[picks] + np.sqrt(self.variances[picks]) * noise
        return samples[0] if n is None else samples


def _as_batch(x: np.ndarray, dim: int) -> Tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 1
    batch = arr[None, :] if single else arr
    if batch.ndim != 2 or batch.shape[1] != dim:
        raise ValueError(f"Erwartet Dimension {dim}, erhalten: {arr.shape}")
    return batch, single


class ConditionKind(str, Enum):
    UNCONDITIONAL = "unconditional"
    PROMPT = "prompt"
    NEGATIVE_PROMPT = "negative_prompt"


@dataclass(frozen=True)
class Condition:
    """A "text prompt": unconditional, a prompt id, or a prompt used negatively."""

    kind: ConditionKind
    prompt_id: Optional[str] = None

    def __post_init__(self) -> None:
        if self.kind is ConditionKind.UNCONDITIONAL and self.prompt_id is not None:
            raise ValueError("Die unbedingte Bedingung trägt keine Prompt-ID")
        if self.kind is not ConditionKind.UNCONDITIONAL and not self.prompt_id:
            raise ValueError("Prompt-Bedingungen brauchen eine ID")

    @classmethod
    def unconditional(cls) -> "Condition":
        return cls(ConditionKind.UNCONDITIONAL)

    @classmethod
    def prompt(cls, prompt_id: str) -> "Condition":
        return cls(ConditionKind.PROMPT, prompt_id)

    @classmethod
    def negative(cls, prompt_id: str) -> "Condition":
        return cls(ConditionKind.NEGATIVE_PROMPT, prompt_id)

    @property
    def is_unconditional(self) -> bool:
        return self.kind is ConditionKind.UNCONDITIONAL

    def __str__(self) -> str:
        if self.is_unconditional:
            return "∅"
        prefix = "-" if self.kind is ConditionKind.NEGATIVE_PROMPT else ""
        return f"{prefix}{self.prompt_id}"


UNCONDITIONAL = Condition.unconditional()


@dataclass(frozen=True, eq=False)
class ConditionRegistry:
    """Immutable mapping from prompt ids to mixtures plus the unconditional union."""

    prompts: Mapping[str, GaussianMixture]
    prior_weights: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.prompts:
            raise ValueError("Mindestens ein Prompt muss registriert sein")
        dims = {mixture.dim for mixture in self.prompts.values()}
        if len(dims) != 1:
            raise ValueError(f"Alle Mischungen brauchen dieselbe Dimension, gefunden: {sorted(dims)}")
        unknown = set(self.prior_weights) - set(self.prompts)
        if unknown:
            raise ValueError(f"Prior-Gewichte für unbekannte Prompts: {sorted(unknown)}")
        prior = {pid: float(self.prior_weights.get(pid, 1.0)) for pid in self.prompts}
        if any(not math.isfinite(value) or value <= 0.0 for value in prior.values()):
            raise ValueError("Prior-Gewichte müssen positiv sein")
        total = sum(prior.values())
        object.__setattr__(self, "prompts", dict(self.prompts))
        object.__setattr__(self, "prior_weights", {pid: value / total for pid, value in prior.items()})
        object.__setattr__(self, "_union", self._build_union())

    # ------------------------------------------------------------------
    def _build_union(self) -> GaussianMixture:
        weights: List[np.ndarray] = []
        means: List[np.ndarray] = []
        variances: List[np.ndarray] = []
        for pid, mixture in self.prompts.items():
            weights.append(self.prior_weights[pid] * mixture.weights)
            means.append(mixture.means)
            variances.append(mixture.variances)
        stacked = np.concatenate(weights)
        return GaussianMixture(
            weights=stacked / stacked.sum(),
            means=np.concatenate(means),
            variances=np.concatenate(variances),
        )

    @property
    def prompt_ids(self) -> List[str]:
        return list(self.prompts)

    @property
    def dim(self) -> int:
        return next(iter(self.prompts.values())).dim

    @property
    def unconditional_mixture(self) -> GaussianMixture:
        return self._union  # type: ignore[attr-defined]

    # ------------------------------------------------------------------
    def resolve(self, cond: Condition) -> GaussianMixture:
        """Return the data mixture a condition refers to."""

        if cond.is_unconditional:
            return self.unconditional_mixture
        try:
            return self.prompts[str(cond.prompt_id)]
        except KeyError:
            raise ValueError(f"Unbekannte Prompt-ID: {cond.prompt_id!r}") from None


def marginal_params(gmm: GaussianMixture, t: int, sched: NoiseSchedule) -> GaussianMixture:
    """Diffused marginal: means ``sqrt(ab) m_k``, variances ``ab v_k + 1 - ab``."""

    step = sched.check_timestep(t, lower=0)
    alpha_bar = float(sched.alpha_bars[step])
    return GaussianMixture(
        weights=gmm.weights,
        means=math.sqrt(alpha_bar) * gmm.means,
        variances=alpha_bar * gmm.variances + (1.0 - alpha_bar),
    )


def epsilon_star(
    x_t: np.ndarray,
    t: int,
    cond: Condition,
    sched: NoiseSchedule,
    registry: ConditionRegistry,
) -> np.ndarray:
    """Exact optimal epsilon prediction for the mixture selected by ``cond``."""

    step = sched.check_timestep(t, lower=0)
    marginal = marginal_params(registry.resolve(cond), step, sched)
    return -sched.sqrt_one_minus_alpha_bar(step) * marginal.score(x_t)


def sample_x0(cond: Condition, rng: np.random.Generator, registry: ConditionRegistry) -> np.ndarray:
    """One exact ancestral sample from the mixture selected by ``cond``."""

    return registry.resolve(cond).sample(rng)


class AnalyticDenoiser:
    """Denoiser interface around :func:`epsilon_star` (perfect, closed form)."""

    def __init__(self, registry: ConditionRegistry, sched: NoiseSchedule) -> None:
        self.registry = registry
        self.sched = sched

    def predict(self, x_t: np.ndarray, t: int, cond: Condition) -> np.ndarray:
        return epsilon_star(x_t, t, cond, self.sched, self.registry)


def registry_from_entries(entries: Sequence[Mapping[str, Any]]) -> ConditionRegistry:
    """Registry from the ``prompts`` list of an experiment file.

    Each entry is ``{"id", "mixture": {"components": [{"weight", "mean", "var"}]}}``
    with an optional ``prior_weight`` (default 1).
    """

    prompts: Dict[str, GaussianMixture] = {}
    prior: Dict[str, float] = {}
    for entry in entries:
        pid = str(entry["id"])
        components = entry["mixture"]["components"]
        prompts[pid] = GaussianMixture.from_components(
            [(float(item["weight"]), item["mean"], item["var"]) for item in components]
        )
        prior[pid] = float(entry.get("prior_weight", 1.0))
    return ConditionRegistry(prompts=prompts, prior_weights=prior)


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
