"""Validation of experiment configuration payloads.

``ConfigValidator.normalise`` fills missing fields from
``udslab.core.defaults`` (reporting every adjustment) and rejects unknown keys
and out-of-range values with a :class:`ConfigError` naming the dotted field.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from .defaults import DEFAULT_CFG_WEIGHTS, DEFAULT_CONFIG
from .errors import ConfigError

TOP_LEVEL_KEYS = ("schedule", "prompts", "distiller", "generator", "run")
PROMPT_KEYS = ("id", "prior_weight", "mixture")
COMPONENT_KEYS = ("weight", "mean", "var")
TASKS = ("generate", "edit")
EDIT_METHODS = ("DDS", "PDS", "UDS_EDIT")
DENOISER_KINDS = ("analytic", "neural")


def ensure_unique(values: Iterable[str]) -> bool:
    """Return ``True`` when all values are unique (einzigartig)."""

    listed = list(values)
    return len(listed) == len(set(listed))


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(float(value))


def _is_integer(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


@dataclass
class ConfigValidator:
    """Normalise an experiment payload and report adjustments."""

    def __post_init__(self) -> None:
        self.defaults = copy.deepcopy(DEFAULT_CONFIG)

    # ------------------------------------------------------------------
    def normalise(self, raw: Any) -> Tuple[Dict[str, Any], List[str]]:
        if not isinstance(raw, Mapping):
            raise ConfigError("Die Konfiguration muss ein JSON-Objekt sein")
        self._reject_unknown(raw, TOP_LEVEL_KEYS, "")
        messages: List[str] = []
        data: Dict[str, Any] = {}

        for section in ("schedule", "distiller", "generator", "run"):
            value = raw.get(section, {})
            if not isinstance(value, Mapping):
                raise ConfigError("muss ein Objekt sein", field=section)
            data[section] = self._merge(value, self.defaults[section], section, messages)

        if "prompts" not in raw:
            raise ConfigError("fehlt (mindestens ein Prompt erforderlich)", field="prompts")
        data["prompts"] = self._normalise_prompts(raw["prompts"], messages)
        if "task" not in raw.get("run", {}):
            raise ConfigError("fehlt (erwartet 'generate' oder 'edit')", field="run.task")

        self._validate_schedule(data["schedule"])
        self._validate_distiller(data["distiller"], messages)
        self._validate_generator(data["generator"])
        dim = len(data["prompts"][0]["mixture"]["components"][0]["mean"])
        self._validate_run(data["run"], data, dim)
        return data, messages

    # ------------------------------------------------------------------
    @staticmethod
    def _reject_unknown(raw: Mapping[str, Any], allowed: Sequence[str], prefix: str) -> None:
        for key in raw:
            if key not in allowed:
                path = f"{prefix}.{key}" if prefix else str(key)
                raise ConfigError("unbekannter Schlüssel", field=path)

    def _merge(
        self,
        raw: Mapping[str, Any],
        defaults: Mapping[str, Any],
        prefix: str,
        messages: List[str],
    ) -> Dict[str, Any]:
        self._reject_unknown(raw, list(defaults), prefix)
        merged: Dict[str, Any] = {}
        for key, default in defaults.items():
            path = f"{prefix}.{key}"
            if key not in raw:
                merged[key] = copy.deepcopy(default)
                if not isinstance(default, dict):
                    messages.append(f"'{path}' ergänzt (Standardwert übernommen).")
                else:
                    messages.append(f"'{path}' ergänzt (Standardblock übernommen).")
                continue
            value = raw[key]
            if isinstance(default, dict):
                if not isinstance(value, Mapping):
                    raise ConfigError("muss ein Objekt sein", field=path)
                merged[key] = self._merge(value, default, path, messages)
            else:
                merged[key] = copy.deepcopy(value)
        return merged

    # ------------------------------------------------------------------
    def _normalise_prompts(self, raw: Any, messages: List[str]) -> List[Dict[str, Any]]:
        if not isinstance(raw, list) or not raw:
            raise ConfigError("muss eine nicht-leere Liste sein", field="prompts")
        prompts: List[Dict[str, Any]] = []
        dim: Optional[int] = None
        for index, entry in enumerate(raw):
            prefix = f"prompts[{index}]"
            if not isinstance(entry, Mapping):
                raise ConfigError("muss ein Objekt sein", field=prefix)
            self._reject_unknown(entry, PROMPT_KEYS, prefix)
            prompt_id = entry.get("id")
            if not isinstance(prompt_id, str) or not prompt_id.strip():
                raise ConfigError("braucht eine nicht-leere Zeichenkette", field=f"{prefix}.id")
            prior = entry.get("prior_weight", 1.0)
            if "prior_weight" not in entry:
                messages.append(f"'{prefix}.prior_weight' ergänzt (Standardwert übernommen).")
            if not _is_number(prior) or float(prior) <= 0.0:
                raise ConfigError("muss eine positive Zahl sein", field=f"{prefix}.prior_weight")
            mixture = entry.get("mixture")
            if not isinstance(mixture, Mapping):
                raise ConfigError("fehlt oder ist kein Objekt", field=f"{prefix}.mixture")
            self._reject_unknown(mixture, ("components",), f"{prefix}.mixture")
            components, dim = self._normalise_components(mixture.get("components"), f"{prefix}.mixture.components", dim)
            prompts.append({"id": prompt_id, "prior_weight": float(prior), "mixture": {"components": components}})
        if not ensure_unique(prompt["id"] for prompt in prompts):
            raise ConfigError("Prompt-IDs müssen eindeutig sein", field="prompts")
        return prompts

    def _normalise_components(
        self, raw: Any, prefix: str, dim: Optional[int]
    ) -> Tuple[List[Dict[str, Any]], int]:
        if not isinstance(raw, list) or not raw:
            raise ConfigError("muss eine nicht-leere Liste sein", field=prefix)
        components: List[Dict[str, Any]] = []
        for index, component in enumerate(raw):
            path = f"{prefix}[{index}]"
            if not isinstance(component, Mapping):
                raise ConfigError("muss ein Objekt sein", field=path)
            self._reject_unknown(component, COMPONENT_KEYS, path)
            weight = component.get("weight")
            if not _is_number(weight) or float(weight) <= 0.0:
                raise ConfigError("muss eine positive Zahl sein", field=f"{path}.weight")
            mean = component.get("mean")
            if not isinstance(mean, list) or not mean or not all(_is_number(value) for value in mean):
                raise ConfigError("muss eine Liste endlicher Zahlen sein", field=f"{path}.mean")
            if dim is None:
                dim = len(mean)
            elif len(mean) != dim:
                raise ConfigError(f"hat {len(mean)} statt {dim} Einträge", field=f"{path}.mean")
            var = component.get("var")
            if _is_number(var):
                variances = [float(var)] * dim
            elif isinstance(var, list) and len(var) == dim and all(_is_number(value) for value in var):
                variances = [float(value) for value in var]
            else:
                raise ConfigError("muss eine Zahl oder eine Liste passender Länge sein", field=f"{path}.var")
            if any(value <= 0.0 for value in variances):
                raise ConfigError("Varianzen müssen positiv sein", field=f"{path}.var")
            components.append({"weight": float(weight), "mean": [float(v) for v in mean], "var": variances})
        total = sum(component["weight"] for component in components)
        for component in components:
            component["weight"] = component["weight"] / total
        return components, int(dim)

    # ------------------------------------------------------------------
    @staticmethod
    def _validate_schedule(schedule: Dict[str, Any]) -> None:
        if not _is_integer(schedule["T"]) or schedule["T"] < 2:
            raise ConfigError("muss eine ganze Zahl >= 2 sein", field="schedule.T")
        for key in ("beta_start", "beta_end"):
            if not _is_number(schedule[key]):
                raise ConfigError("muss eine endliche Zahl sein", field=f"schedule.{key}")
        if not 0.0 < schedule["beta_start"] <= schedule["beta_end"] < 1.0:
            raise ConfigError("erwartet 0 < beta_start <= beta_end < 1", field="schedule.beta_end")
        if schedule["sigma_form"] not in ("ddpm", "literal"):
            raise ConfigError("erlaubt: 'ddpm', 'literal'", field="schedule.sigma_form")
        if not _is_number(schedule["terminal_alpha_bar_max"]) or schedule["terminal_alpha_bar_max"] <= 0.0:
            raise ConfigError("muss positiv sein", field="schedule.terminal_alpha_bar_max")

    @staticmethod
    def _validate_distiller(distiller: Dict[str, Any], messages: List[str]) -> None:
        method = distiller["method"]
        if not isinstance(method, str) or method.upper() not in DEFAULT_CFG_WEIGHTS:
            allowed = ", ".join(DEFAULT_CFG_WEIGHTS)
            raise ConfigError(f"unbekannte Methode {method!r} (erlaubt: {allowed})", field="distiller.method")
        distiller["method"] = method.upper()
        if distiller["w"] is None:
            distiller["w"] = DEFAULT_CFG_WEIGHTS[distiller["method"]]
            messages.append(f"'distiller.w' auf {distiller['w']:g} gesetzt (Standard für {distiller['method']}).")
        if not _is_number(distiller["w"]) or distiller["w"] < 0.0:
            raise ConfigError("muss eine Zahl >= 0 sein", field="distiller.w")
        for key in ("c", "t_min"):
            if not _is_integer(distiller[key]) or distiller[key] < 1:
                raise ConfigError("muss eine ganze Zahl >= 1 sein", field=f"distiller.{key}")
        if distiller["t_max"] is not None and (not _is_integer(distiller["t_max"]) or distiller["t_max"] < distiller["t_min"]):
            raise ConfigError("muss eine ganze Zahl >= t_min sein", field="distiller.t_max")
        for block, kinds in (("x0_mode", ("tweedie", "ddim")), ("noising", ("forward", "ddim_inverse"))):
            if distiller[block]["kind"] not in kinds:
                raise ConfigError(f"erlaubt: {', '.join(kinds)}", field=f"distiller.{block}.kind")
            if not _is_integer(distiller[block]["n_steps"]) or distiller[block]["n_steps"] < 1:
                raise ConfigError("muss eine ganze Zahl >= 1 sein", field=f"distiller.{block}.n_steps")
        if distiller["omega"] not in ("constant", "one_minus_alpha_bar"):
            raise ConfigError("erlaubt: 'constant', 'one_minus_alpha_bar'", field="distiller.omega")
        if distiller["inversion_condition"] not in ("unconditional", "prompt"):
            raise ConfigError("erlaubt: 'unconditional', 'prompt'", field="distiller.inversion_condition")

    @staticmethod
    def _validate_generator(generator: Dict[str, Any]) -> None:
        if generator["variant"] not in ("direct", "smooth_basis"):
            raise ConfigError("erlaubt: 'direct', 'smooth_basis'", field="generator.variant")
        if not _is_integer(generator["n_basis"]) or generator["n_basis"] < 1:
            raise ConfigError("muss eine ganze Zahl >= 1 sein", field="generator.n_basis")
        if generator["init_scale"] is not None and (not _is_number(generator["init_scale"]) or generator["init_scale"] < 0.0):
            raise ConfigError("muss eine Zahl >= 0 sein", field="generator.init_scale")

    def _validate_run(self, run: Dict[str, Any], data: Dict[str, Any], dim: int) -> None:
        prompt_ids = [prompt["id"] for prompt in data["prompts"]]
        if run["task"] not in TASKS:
            raise ConfigError("erlaubt: 'generate', 'edit'", field="run.task")
        method = data["distiller"]["method"]
        editing_method = method in EDIT_METHODS
        if (run["task"] == "edit") != editing_method:
            raise ConfigError(f"Methode {method} passt nicht zur Aufgabe {run['task']!r}", field="distiller.method")
        if data["generator"]["variant"] == "smooth_basis" and data["generator"]["n_basis"] > dim:
            raise ConfigError(f"darf höchstens {dim} sein", field="generator.n_basis")

        if run["tgt"] not in prompt_ids:
            raise ConfigError(f"muss eine der Prompt-IDs sein: {prompt_ids}", field="run.tgt")
        if run["task"] == "edit" and run["src"] not in prompt_ids:
            raise ConfigError(f"Bearbeitung braucht eine Quell-ID aus {prompt_ids}", field="run.src")
        if run["src"] is not None and run["src"] not in prompt_ids:
            raise ConfigError(f"muss eine der Prompt-IDs sein: {prompt_ids}", field="run.src")
        if method == "UDS_GEN_NEG" and run["neg"] is None:
            raise ConfigError("UDS_GEN_NEG braucht einen negativen Prompt", field="run.neg")
        if run["neg"] is not None and run["neg"] not in prompt_ids:
            raise ConfigError(f"muss eine der Prompt-IDs sein: {prompt_ids}", field="run.neg")

        for key in ("steps", "seeds", "record_every", "image_scale"):
            if not _is_integer(run[key]) or run[key] < 1:
                raise ConfigError("muss eine ganze Zahl >= 1 sein", field=f"run.{key}")
        if not _is_integer(run["seed"]) or run["seed"] < 0:
            raise ConfigError("muss eine ganze Zahl >= 0 sein", field="run.seed")
        if not isinstance(run["as_image"], bool):
            raise ConfigError("muss true oder false sein", field="run.as_image")
        if run["as_image"] and math.isqrt(dim) ** 2 != dim:
            raise ConfigError(f"Dimension {dim} ist keine Quadratzahl", field="run.as_image")

        source = run["source_x0"]
        if source is not None and (
            not isinstance(source, list) or len(source) != dim or not all(_is_number(value) for value in source)
        ):
            raise ConfigError(f"muss eine Liste mit {dim} Zahlen sein", field="run.source_x0")
        frozen = run["frozen_dims"]
        if frozen is not None and (
            not isinstance(frozen, list)
            or not frozen
            or not all(_is_integer(value) and 0 <= value < dim for value in frozen)
        ):
            raise ConfigError(f"muss eine nicht-leere Liste von Indizes in [0, {dim}) sein", field="run.frozen_dims")

        adam = run["adam"]
        for key in ("lr", "beta1", "beta2", "eps_hat"):
            if not _is_number(adam[key]):
                raise ConfigError("muss eine endliche Zahl sein", field=f"run.adam.{key}")
        if adam["lr"] < 0.0 or adam["eps_hat"] <= 0.0:
            raise ConfigError("lr >= 0 und eps_hat > 0 erforderlich", field="run.adam")
        if not (0.0 <= adam["beta1"] < 1.0 and 0.0 <= adam["beta2"] < 1.0):
            raise ConfigError("beta1 und beta2 müssen in [0, 1) liegen", field="run.adam")

        denoiser = run["denoiser"]
        if denoiser["kind"] not in DENOISER_KINDS:
            raise ConfigError("erlaubt: 'analytic', 'neural'", field="run.denoiser.kind")
        if denoiser["weights"] is not None and not isinstance(denoiser["weights"], str):
            raise ConfigError("muss ein Dateipfad sein", field="run.denoiser.weights")
        for key in ("hidden", "cond_dim", "batch"):
            if not _is_integer(denoiser[key]) or denoiser[key] < 1:
                raise ConfigError("muss eine ganze Zahl >= 1 sein", field=f"run.denoiser.{key}")
        for key in ("train_steps", "seed"):
            if not _is_integer(denoiser[key]) or denoiser[key] < 0:
                raise ConfigError("muss eine ganze Zahl >= 0 sein", field=f"run.denoiser.{key}")
        if not _is_number(denoiser["lr"]) or denoiser["lr"] <= 0.0:
            raise ConfigError("muss positiv sein", field="run.denoiser.lr")
        if not _is_number(denoiser["dropout"]) or not 0.0 <= denoiser["dropout"] <= 1.0:
            raise ConfigError("muss in [0, 1] liegen", field="run.denoiser.dropout")


__all__ = ["ConfigValidator", "TOP_LEVEL_KEYS", "ensure_unique"]
