"""Distillation loop: sample (eps, t), compute the delta, chain it, update with Adam.

One :func:`run` owns its theta and Adam state.  :func:`run_replicates` executes
isolated runs for several seeds on a thread pool; the denoiser and the schedule
are shared read-only.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from ...core.defaults import THREADS_ENV_VAR
from ...core.errors import NumericalAbortError
from ...core.logging_manager import get_logger
from ..distillers import DeltaTerms, DistillerConfig, PromptPair, compute_delta, timestep_bounds
from ..generator import GeneratorConfig, GeneratorParams, backprop_delta, fit_theta, render
from ..gmm_oracle import ConditionRegistry, sample_x0
from ..latent_ops import Denoiser
from ..metrics import cosine_sim
from ..schedule import NoiseSchedule
from .adam import AdamConfig, AdamState, adam_update

# Normalised grad norm divides by the mean over this many leading records.
NORMALISATION_WINDOW = 100


@dataclass(frozen=True, eq=False)
class RunConfig:
    distiller: DistillerConfig
    prompts: PromptPair
    dim: int
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    steps: int = 2000
    adam: AdamConfig = field(default_factory=AdamConfig)
    seed: int = 0
    source_x0: Optional[np.ndarray] = None
    record_every: int = 1
    keep_snapshots: bool = False

    def __post_init__(self) -> None:
        if int(self.steps) < 1:
            raise ValueError(f"steps muss >= 1 sein, erhalten: {self.steps}")
        if int(self.record_every) < 1:
            raise ValueError(f"record_every muss >= 1 sein, erhalten: {self.record_every}")
        if int(self.dim) < 1:
            raise ValueError(f"dim muss >= 1 sein, erhalten: {self.dim}")
        self.prompts.require(self.distiller.method)
        if self.source_x0 is not None:
            source = np.array(self.source_x0, dtype=np.float64).reshape(-1)
            if source.size != self.dim:
                raise ValueError(f"source_x0 hat {source.size} statt {self.dim} Einträge")
            object.__setattr__(self, "source_x0", source)

    @property
    def is_editing(self) -> bool:
        return self.distiller.method.is_editing

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(self, seed=int(seed))

    def echo(self) -> Dict[str, Any]:
        """Compact description for abort messages and logs."""

        return {
            "distiller": self.distiller.to_dict(),
            "tgt": str(self.prompts.tgt),
            "src": None if self.prompts.src is None else str(self.prompts.src),
            "neg": None if self.prompts.neg is None else str(self.prompts.neg),
            "generator": self.generator.to_dict(),
            "steps": self.steps,
            "seed": self.seed,
        }


@dataclass(frozen=True, eq=False)
class TraceRecord:
    step: int
    t_sampled: int
    grad_norm: float
    grad_norm_normalized: float
    cos_recon: float
    cos_cls: float
    cos_identity: float
    terms: DeltaTerms
    theta_snapshot: Optional[np.ndarray] = None


@dataclass(frozen=True, eq=False)
class RunResult:
    config: RunConfig
    params: GeneratorParams
    theta: np.ndarray
    trace: List[TraceRecord]
    initial_render: np.ndarray
    final_render: np.ndarray
    x0_src: Optional[np.ndarray] = None

    @property
    def seed(self) -> int:
        return self.config.seed


def _term_cosines(terms: DeltaTerms) -> Dict[str, float]:
    return {
        "cos_recon": cosine_sim(terms.recon, terms.total),
        "cos_cls": cosine_sim(terms.cls, terms.total),
        "cos_identity": cosine_sim(terms.identity, terms.total),
    }


def run(
    config: RunConfig,
    denoiser: Denoiser,
    sched: NoiseSchedule,
    registry: Optional[ConditionRegistry] = None,
    *,
    logger: Optional[logging.Logger] = None,
) -> RunResult:
    """Fixed step count distillation; fully determined by ``config`` (incl. seed)."""

    logger = logger or get_logger("modules.optimizer")
    rng = np.random.default_rng(config.seed)
    params = config.generator.build(config.dim, rng)
    if params.output_dim != config.dim:
        raise ValueError(f"Generator rendert {params.output_dim} statt {config.dim} Dimensionen")

    x0_src: Optional[np.ndarray] = None
    if config.is_editing:
        if config.source_x0 is not None:
            x0_src = np.array(config.source_x0, dtype=np.float64)
        elif registry is not None:
            x0_src = sample_x0(config.prompts.source(config.distiller.method), rng, registry)
        else:
            raise ValueError("Bearbeitung braucht source_x0 oder eine Prompt-Registry")
        params = fit_theta(params, x0_src)

    low, high = timestep_bounds(config.distiller, sched)
    state = AdamState.initial(params.theta)
    initial_render = render(params)
    trace: List[TraceRecord] = []
    norms: List[float] = []
    logger.debug(
        "Lauf gestartet: %s, Seed %d, %d Schritte, t in [%d, %d]",
        config.distiller.method.value,
        config.seed,
        config.steps,
        low,
        high,
    )

    for step in range(1, config.steps + 1):
        eps = rng.standard_normal(config.dim)
        t = int(rng.integers(low, high + 1))
        current = params.with_theta(state.theta)
        terms = compute_delta(
            render(current), t, eps, denoiser, config.prompts, config.distiller, sched, x0_src=x0_src
        )
        grad = backprop_delta(current, terms.total)
        if not np.all(np.isfinite(grad)):
            logger.error("Numerischer Abbruch in Schritt %d (t=%d): %s", step, t, config.echo())
            raise NumericalAbortError(
                f"nicht-endlicher Gradient bei t={t}", step=step, context=config.echo()
            )
        state = adam_update(state, grad, config.adam)
        if not np.all(np.isfinite(state.theta)):
            raise NumericalAbortError(f"theta wurde nicht-endlich bei t={t}", step=step, context=config.echo())

        if (step - 1) % config.record_every:
            continue
        grad_norm = float(np.linalg.norm(grad))
        norms.append(grad_norm)
        baseline = float(np.mean(norms[:NORMALISATION_WINDOW]))
        trace.append(
            TraceRecord(
                step=step,
                t_sampled=t,
                grad_norm=grad_norm,
                grad_norm_normalized=grad_norm / baseline if baseline > 0.0 else 0.0,
                terms=terms,
                theta_snapshot=state.theta.copy() if config.keep_snapshots else None,
                **_term_cosines(terms),
            )
        )

    final = params.with_theta(state.theta)
    logger.debug("Lauf beendet: %s, Seed %d", config.distiller.method.value, config.seed)
    return RunResult(
        config=config,
        params=final,
        theta=state.theta.copy(),
        trace=trace,
        initial_render=initial_render,
        final_render=render(final),
        x0_src=x0_src,
    )


def thread_cap(n_jobs: int, *, logger: Optional[logging.Logger] = None) -> int:
    """Worker count: ``UDSLAB_THREADS`` if set (>= 1), otherwise ``n_jobs``."""

    raw = os.environ.get(THREADS_ENV_VAR, "").strip()
    default = max(1, int(n_jobs))
    if not raw:
        return default
    try:
        value = int(raw)
    except ValueError:
        value = 0
    if value < 1:
        (logger or get_logger("modules.optimizer")).warning(
            "%s=%r ist ungültig, verwende %d Threads.", THREADS_ENV_VAR, raw, default
        )
        return default
    return min(value, default)


def run_replicates(
    config: RunConfig,
    seeds: Sequence[int],
    denoiser: Denoiser,
    sched: NoiseSchedule,
    registry: Optional[ConditionRegistry] = None,
    *,
    max_workers: Optional[int] = None,
) -> List[RunResult]:
    """One isolated run per seed; results come back in seed order."""

    seeds = [int(seed) for seed in seeds]
    if not seeds:
        return []
    workers = max_workers if max_workers is not None else thread_cap(len(seeds))
    configs = [config.with_seed(seed) for seed in seeds]
    if workers <= 1:
        return [run(item, denoiser, sched, registry) for item in configs]
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(lambda item: run(item, denoiser, sched, registry), configs))


__all__ = [
    "NORMALISATION_WINDOW",
    "RunConfig",
    "RunResult",
    "TraceRecord",
    "run",
    "run_replicates",
    "thread_cap",
]
