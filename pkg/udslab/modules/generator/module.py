"""Linear differentiable generators ``x = g(theta, camera)``.

``direct`` renders theta itself; ``smooth_basis`` renders ``B @ theta`` with a
fixed orthonormal low-frequency cosine basis.  The camera argument is accepted
for interface parity and ignored.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Optional

import numpy as np
from scipy.fft import idct


class GeneratorVariant(str, Enum):
    DIRECT = "direct"
    SMOOTH_BASIS = "smooth_basis"


@dataclass(frozen=True, eq=False)
class GeneratorParams:
    variant: GeneratorVariant
    theta: np.ndarray
    basis: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        variant = GeneratorVariant(self.variant)
        theta = np.array(self.theta, dtype=np.float64).reshape(-1)
        object.__setattr__(self, "variant", variant)
        object.__setattr__(self, "theta", theta)
        if variant is GeneratorVariant.DIRECT:
            if self.basis is not None:
                raise ValueError("Der direkte Generator hat keine Basis")
            return
        if self.basis is None:
            raise ValueError("smooth_basis braucht eine Basismatrix")
        basis = np.array(self.basis, dtype=np.float64)
        if basis.ndim != 2 or basis.shape[1] != theta.size:
            raise ValueError(f"Basis {basis.shape} passt nicht zu theta ({theta.size})")
        basis.setflags(write=False)
        object.__setattr__(self, "basis", basis)

    # ------------------------------------------------------------------
    @property
    def output_dim(self) -> int:
        if self.basis is None:
            return int(self.theta.size)
        return int(self.basis.shape[0])

    def with_theta(self, theta: np.ndarray) -> "GeneratorParams":
        return GeneratorParams(variant=self.variant, theta=theta, basis=self.basis)


@dataclass(frozen=True)
class GeneratorConfig:
    """Generator settings from the experiment file (theta is created per run)."""

    variant: GeneratorVariant = GeneratorVariant.DIRECT
    n_basis: int = 4
    init_scale: Optional[float] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "variant", GeneratorVariant(self.variant))
        if int(self.n_basis) < 1:
            raise ValueError("n_basis muss mindestens 1 sein")

    def build(self, dim: int, rng: np.random.Generator) -> "GeneratorParams":
        return init_generator(self.variant, dim, rng, n_basis=self.n_basis, init_scale=self.init_scale)

    def to_dict(self) -> Dict[str, Any]:
        return {"variant": self.variant.value, "n_basis": self.n_basis, "init_scale": self.init_scale}


def make_cosine_basis(dim: int, n_basis: int) -> np.ndarray:
    """First ``n_basis`` orthonormal DCT-II columns over ``dim`` coordinates."""

    if not 1 <= n_basis <= dim:
        raise ValueError(f"n_basis muss in [1, {dim}] liegen, erhalten: {n_basis}")
    return idct(np.eye(dim), type=2, norm="ortho", axis=0)[:, :n_basis]


def render(params: GeneratorParams, camera: Any = None) -> np.ndarray:
    if params.basis is None:
        return params.theta.copy()
    return params.basis @ params.theta


def backprop_delta(params: GeneratorParams, delta: np.ndarray) -> np.ndarray:
    """Chain rule ``(dg/dtheta)^T delta``."""

    delta = np.asarray(delta, dtype=np.float64)
    if delta.shape != (params.output_dim,):
        raise ValueError(f"Delta {delta.shape} passt nicht zur Ausgabe ({params.output_dim})")
    if params.basis is None:
        return delta.copy()
    return params.basis.T @ delta


def init_generator(
    variant: "str | GeneratorVariant",
    dim: int,
    rng: np.random.Generator,
    *,
    n_basis: int = 4,
    init_scale: Optional[float] = None,
) -> GeneratorParams:
    """Direct: ``N(0, 1) * 0.1``; smooth basis: zeros unless ``init_scale`` is set."""

    parsed = GeneratorVariant(variant)
    if parsed is GeneratorVariant.DIRECT:
        scale = 0.1 if init_scale is None else float(init_scale)
        return GeneratorParams(parsed, scale * rng.standard_normal(dim))
    basis = make_cosine_basis(dim, n_basis)
    scale = 0.0 if init_scale is None else float(init_scale)
    theta = scale * rng.standard_normal(n_basis) if scale else np.zeros(n_basis)
    return GeneratorParams(parsed, theta, basis)


def fit_theta(params: GeneratorParams, target: np.ndarray) -> GeneratorParams:
    """Least-squares theta whose render best matches ``target`` (exact for direct)."""

    target = np.asarray(target, dtype=np.float64)
    if target.shape != (params.output_dim,):
        raise ValueError(f"Ziel {target.shape} passt nicht zur Ausgabe ({params.output_dim})")
    if params.basis is None:
        return params.with_theta(target)
    theta, *_ = np.linalg.lstsq(params.basis, target, rcond=None)
    return params.with_theta(theta)


__all__ = [
    "GeneratorConfig",
    "GeneratorParams",
    "GeneratorVariant",
    "backprop_delta",
    "fit_theta",
    "init_generator",
    "make_cosine_basis",
    "render",
]
