"""Training losses: mean squared error, L2 weight penalty, Gaussian KL."""

from __future__ import annotations

import numpy as np


def mse_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean over every element; returns (value, gradient w.r.t. pred)."""
    diff = pred - target
    return float(np.mean(diff * diff)), (2.0 / diff.size) * diff


def l2_penalty(modules, coeff: float) -> float:
    """(coeff/2) sum of squared weights, gradient coeff*w added in place.

    Biases and batch-norm scales are excluded; only parameters listed in
    each layer's ``decay_params`` participate.
    """
    if coeff == 0.0:
        return 0.0
    total = 0.0
    for module in modules:
        for layer in module.layers:
            for name in layer.decay_params:
                w = layer.params[name]
                total += float(np.sum(w * w))
                layer.grads[name] += coeff * w
    return 0.5 * coeff * total


def kl_standard_normal(mu: np.ndarray, log_var: np.ndarray):
    """KL(N(mu, diag exp(log_var)) || N(0, I)), averaged over the batch.

    Returns (value, dmu, dlog_var).
    """
    batch = mu.shape[0]
    var = np.exp(log_var)
    val = 0.5 * float(np.sum(mu * mu + var - 1.0 - log_var)) / batch
    return val, mu / batch, 0.5 * (var - 1.0) / batch
