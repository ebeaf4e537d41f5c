"""Minimal neural-network engine: layers, losses, optimizers, kernels."""

from .kernels import backend
from .layers import (
    Activation,
    BatchNorm,
    Conv2D,
    ConvTranspose2D,
    Dense,
    Flatten,
    ReparamGaussian,
    Reshape,
    Sequential,
    gaussian_reparam_sample,
)
from .losses import kl_standard_normal, l2_penalty, mse_loss
from .optim import Adam, GradientDescent, make_optimizer

__all__ = [
    "Activation", "Adam", "BatchNorm", "Conv2D", "ConvTranspose2D", "Dense",
    "Flatten", "GradientDescent", "ReparamGaussian", "Reshape", "Sequential",
    "backend", "gaussian_reparam_sample", "kl_standard_normal", "l2_penalty",
    "make_optimizer", "mse_loss",
]
