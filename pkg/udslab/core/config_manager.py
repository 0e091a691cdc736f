"""Experiment configuration files.

An experiment is described by one JSON file (see ``data/*.json``).  This
module reads that file, lets ``udslab.core.validators.ConfigValidator`` fill
defaults and reject malformed values, and turns the result into the typed
objects the numerical modules expect (Rauschtabelle, Prompt-Registry,
Distiller- und Laufkonfiguration).
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional

import numpy as np

from .errors import ConfigError
from .file_utils import atomic_write_json
from .logging_manager import get_logger
from .validators import ConfigValidator


@dataclass
class ExperimentConfig:
    """Validated experiment payload with builders for the typed objects."""

    schedule: Dict[str, Any]
    prompts: List[Dict[str, Any]]
    distiller: Dict[str, Any]
    generator: Dict[str, Any]
    run: Dict[str, Any]
    source: Optional[Path] = field(default=None, compare=False)

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any], *, source: Optional[Path] = None) -> "ExperimentConfig":
        """Validate ``raw`` and create an instance (adjustments are discarded)."""

        data, _ = ConfigValidator().normalise(raw)
        config = cls(source=source, **data)
        config.check_timesteps()
        return config

    def to_dict(self) -> Dict[str, Any]:
        return copy.deepcopy(
            {
                "schedule": self.schedule,
                "prompts": self.prompts,
                "distiller": self.distiller,
                "generator": self.generator,
                "run": self.run,
            }
        )

    # ------------------------------------------------------------------
    def with_overrides(
        self,
        *,
        method: Optional[str] = None,
        cfg_weight: Optional[float] = None,
        seed: Optional[int] = None,
        seeds: Optional[int] = None,
    ) -> "ExperimentConfig":
        """Apply command line overrides and validate again.

        Changing the method without an explicit ``cfg_weight`` resets ``w`` to
        the default weight of the new method.
        """

        payload = self.to_dict()
        if method is not None:
            payload["distiller"]["method"] = method
            if cfg_weight is None:
                payload["distiller"]["w"] = None
        if cfg_weight is not None:
            payload["distiller"]["w"] = cfg_weight
        if seed is not None:
            payload["run"]["seed"] = seed
        if seeds is not None:
            payload["run"]["seeds"] = seeds
        return ExperimentConfig.from_dict(payload, source=self.source)

    # ------------------------------------------------------------------
    @property
    def dim(self) -> int:
        return len(self.prompts[0]["mixture"]["components"][0]["mean"])

    @property
    def task(self) -> str:
        return str(self.run["task"])

    @property
    def method(self) -> str:
        return str(self.distiller["method"])

    @property
    def seeds(self) -> List[int]:
        start = int(self.run["seed"])
        return list(range(start, start + int(self.run["seeds"])))

    # ------------------------------------------------------------------
    def build_schedule(self) -> Any:
        from ..modules.schedule import make_linear_schedule

        return make_linear_schedule(
            int(self.schedule["T"]),
            float(self.schedule["beta_start"]),
            float(self.schedule["beta_end"]),
            terminal_alpha_bar_max=float(self.schedule["terminal_alpha_bar_max"]),
        )

    def build_registry(self) -> Any:
        from ..modules.gmm_oracle import registry_from_entries

        return registry_from_entries(self.prompts)

    def distiller_config(self) -> Any:
        from ..modules.distillers import DistillerConfig

        return DistillerConfig.from_dict(self.distiller, sigma_form=str(self.schedule["sigma_form"]))

    def prompt_pair(self) -> Any:
        from ..modules.distillers import PromptPair
        from ..modules.gmm_oracle import Condition

        run = self.run
        return PromptPair(
            tgt=Condition.prompt(run["tgt"]),
            src=None if run["src"] is None else Condition.prompt(run["src"]),
            neg=None if run["neg"] is None else Condition.negative(run["neg"]),
        )

    def check_timesteps(self) -> None:
        """Raise :class:`ConfigError` when no admissible timestep remains."""

        from ..modules.distillers import timestep_bounds

        try:
            timestep_bounds(self.distiller_config(), self.build_schedule())
        except ValueError as error:
            raise ConfigError(str(error), field="distiller") from error

    def run_config(self, *, seed: Optional[int] = None) -> Any:
        from ..modules.generator import GeneratorConfig
        from ..modules.optimizer import AdamConfig, RunConfig

        run = self.run
        source = run["source_x0"]
        return RunConfig(
            distiller=self.distiller_config(),
            prompts=self.prompt_pair(),
            dim=self.dim,
            generator=GeneratorConfig(
                variant=self.generator["variant"],
                n_basis=int(self.generator["n_basis"]),
                init_scale=self.generator["init_scale"],
            ),
            steps=int(run["steps"]),
            adam=AdamConfig(**{key: float(value) for key, value in run["adam"].items()}),
            seed=int(run["seed"] if seed is None else seed),
            source_x0=None if source is None else np.array(source, dtype=np.float64),
            record_every=int(run["record_every"]),
        )


class ConfigManager:
    """Load experiment files with validation and persist effective configs."""

    def __init__(self, file_path: Path) -> None:
        self.file_path = Path(file_path)
        self.logger = get_logger("core.config")
        self.validator = ConfigValidator()

    # ------------------------------------------------------------------
    def load(self) -> ExperimentConfig:
        """Return the validated experiment or raise :class:`ConfigError`."""

        if not self.file_path.exists():
            raise ConfigError(f"Konfigurationsdatei fehlt: {self.file_path}")
        try:
            with self.file_path.open("r", encoding="utf-8") as handle:
                raw_content = json.load(handle)
        except json.JSONDecodeError as error:
            raise ConfigError(f"ungültiges JSON ({error.msg})", line=error.lineno) from error
        except OSError as error:
            raise ConfigError(f"Konfiguration konnte nicht gelesen werden: {error}") from error

        data, adjustments = self.validator.normalise(raw_content)
        if adjustments:
            self.logger.debug("Konfiguration ergänzt: %s", "; ".join(adjustments))
        config = ExperimentConfig(source=self.file_path, **data)
        config.check_timesteps()
        self.logger.info(
            "Konfiguration geladen: %s (%s, %s, d=%d)",
            self.file_path,
            config.task,
            config.method,
            config.dim,
        )
        return config

    # ------------------------------------------------------------------
    def save_effective(self, config: ExperimentConfig, target: Path) -> bool:
        """Write the fully populated configuration next to the run outputs."""

        written = atomic_write_json(Path(target), config.to_dict(), logger=self.logger)
        if not written:
            self.logger.error("Effektive Konfiguration konnte nicht gespeichert werden.")
        return written


__all__ = ["ConfigManager", "ExperimentConfig"]
