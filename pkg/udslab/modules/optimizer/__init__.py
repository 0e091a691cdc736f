"""Distillation loop and the shared Adam optimizer."""

from .adam import AdamConfig, AdamState, adam_step, adam_update
from .module import (
    NORMALISATION_WINDOW,
    RunConfig,
    RunResult,
    TraceRecord,
    run,
    run_replicates,
    thread_cap,
)

__all__ = [
    "AdamConfig",
    "AdamState",
    "NORMALISATION_WINDOW",
    "RunConfig",
    "RunResult",
    "TraceRecord",
    "adam_step",
    "adam_update",
    "run",
    "run_replicates",
    "thread_cap",
]
