"""Shared default values for uds-lab experiment configuration files."""

from __future__ import annotations

from typing import Any, Dict


# Central place for default payloads so that the validator, the typed config
# objects and the command line rely on the same values.
DEFAULT_SCHEDULE: Dict[str, Any] = {
    "T": 1000,
    "beta_start": 0.00085,
    "beta_end": 0.012,
    "sigma_form": "ddpm",
    "terminal_alpha_bar_max": 1e-3,
}

# CFG weight per method: 100 for SDS/DDS/PDS, 7.5 for ISM and the UDS variants.
DEFAULT_CFG_WEIGHTS: Dict[str, float] = {
    "SDS": 100.0,
    "DDS": 100.0,
    "PDS": 100.0,
    "ISM": 7.5,
    "UDS_EDIT": 7.5,
    "UDS_GEN": 7.5,
    "UDS_GEN_NEG": 7.5,
}

DEFAULT_DISTILLER: Dict[str, Any] = {
    "method": "UDS_GEN",
    "w": None,
    "c": 50,
    "x0_mode": {"kind": "tweedie", "n_steps": 4},
    "noising": {"kind": "forward", "n_steps": 10},
    "t_min": 20,
    "t_max": None,
    "omega": "constant",
    "inversion_condition": "unconditional",
}

DEFAULT_GENERATOR: Dict[str, Any] = {
    "variant": "direct",
    "n_basis": 4,
    "init_scale": None,
}

DEFAULT_ADAM: Dict[str, Any] = {
    "lr": 1e-2,
    "beta1": 0.9,
    "beta2": 0.99,
    "eps_hat": 1e-8,
}

DEFAULT_DENOISER: Dict[str, Any] = {
    "kind": "analytic",
    "weights": None,
    "hidden": 64,
    "cond_dim": 8,
    "train_steps": 20000,
    "batch": 128,
    "lr": 1e-3,
    "dropout": 0.1,
    "seed": 0,
}

DEFAULT_RUN: Dict[str, Any] = {
    "task": "generate",
    "src": None,
    "tgt": None,
    "neg": None,
    "steps": 2000,
    "seed": 0,
    "seeds": 1,
    "record_every": 1,
    "source_x0": None,
    "frozen_dims": None,
    "as_image": False,
    "image_scale": 8,
    "adam": dict(DEFAULT_ADAM),
    "denoiser": dict(DEFAULT_DENOISER),
}

DEFAULT_CONFIG: Dict[str, Any] = {
    "schedule": dict(DEFAULT_SCHEDULE),
    "prompts": [],
    "distiller": dict(DEFAULT_DISTILLER),
    "generator": dict(DEFAULT_GENERATOR),
    "run": dict(DEFAULT_RUN),
}

THREADS_ENV_VAR = "UDSLAB_THREADS"


__all__ = [
    "DEFAULT_ADAM",
    "DEFAULT_CFG_WEIGHTS",
    "DEFAULT_CONFIG",
    "DEFAULT_DENOISER",
    "DEFAULT_DISTILLER",
    "DEFAULT_GENERATOR",
    "DEFAULT_RUN",
    "DEFAULT_SCHEDULE",
    "THREADS_ENV_VAR",
]
