"""Linear toy generators with exact Jacobians."""

from .module import (
    GeneratorConfig,
    GeneratorParams,
    GeneratorVariant,
    backprop_delta,
    fit_theta,
    init_generator,
    make_cosine_basis,
    render,
)

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
