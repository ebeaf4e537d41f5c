"""Parameter-update rules: Adam, plain (stochastic) gradient descent.

The learning rate decays as lr / (1 + decay * t) with t the zero-based
global step index. Adam uses the standard bias-corrected moments with
beta1 = 0.9, beta2 = 0.999, eps = 1e-8.
"""

from __future__ import annotations

import numpy as np

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class Optimizer:
    def __init__(self, learning_rate: float = 0.001, decay: float = 0.0):
        if learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        self.learning_rate = learning_rate
        self.decay = decay

    def lr_at(self, t: int) -> float:
        return self.learning_rate / (1.0 + self.decay * t)

    def step(self, params: list[np.ndarray], grads: list[np.ndarray], t: int):
        raise NotImplementedError


class GradientDescent(Optimizer):
    """Plain descent; covers both 'gd' (full batch) and 'sgd' (mini-batch)."""

    def step(self, params, grads, t):
        lr = self.lr_at(t)
        for p, g in zip(params, grads):
            p -= lr * g


class Adam(Optimizer):
    def __init__(self, learning_rate: float = 0.001, decay: float = 0.0):
        super().__init__(learning_rate, decay)
        self._m: list[np.ndarray] | None = None
        self._v: list[np.ndarray] | None = None
        self._steps = 0

    def step(self, params, grads, t):
        if self._m is None:
            self._m = [np.zeros_like(p) for p in params]
            self._v = [np.zeros_like(p) for p in params]
        self._steps += 1
        lr = self.lr_at(t)
        b1c = 1.0 - ADAM_BETA1**self._steps
        b2c = 1.0 - ADAM_BETA2**self._steps
        for i, (p, g) in enumerate(zip(params, grads)):
            self._m[i] = ADAM_BETA1 * self._m[i] + (1 - ADAM_BETA1) * g
            self._v[i] = ADAM_BETA2 * self._v[i] + (1 - ADAM_BETA2) * (g * g)
            m_hat = self._m[i] / b1c
            v_hat = self._v[i] / b2c
            p -= lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)


def make_optimizer(kind: str, learning_rate: float, decay: float) -> Optimizer:
    if kind == "adam":
        return Adam(learning_rate, decay)
    if kind in ("sgd", "gd"):
        return GradientDescent(learning_rate, decay)
    raise ValueError(f"unknown optimizer {kind!r}")
