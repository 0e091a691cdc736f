"""Trainable neural denoiser package."""

from .module import (
    PARAMETER_ORDER,
    WEIGHT_FILE_MAGIC,
    DenoiserNet,
    NeuralDenoiser,
    epsilon_rms,
    init_net,
    load_net,
    loss_and_grad,
    predict,
    save_net,
    time_embedding,
    train,
)

__all__ = [
    "DenoiserNet",
    "NeuralDenoiser",
    "PARAMETER_ORDER",
    "WEIGHT_FILE_MAGIC",
    "epsilon_rms",
    "init_net",
    "load_net",
    "loss_and_grad",
    "predict",
    "save_net",
    "time_embedding",
    "train",
]
