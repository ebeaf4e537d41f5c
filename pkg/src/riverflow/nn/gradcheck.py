"""Finite-difference verification of analytic gradients.

``max_relative_error`` perturbs parameters one at a time with central
differences and compares against the analytic gradient produced by a
single backward pass. Loss callables must be deterministic (freeze any
sampling noise first).
"""

from __future__ import annotations

import numpy as np


def _rel_err(a: float, n: float) -> float:
    # the scale floor sits ~3 orders above the central-difference noise
    # floor (~1e-10 for O(1) losses), so exact-zero gradients do not flag
    scale = max(abs(a) + abs(n), 1e-3)
    return abs(a - n) / scale


def max_relative_error(
    loss_fn,
    modules,
    h: float = 1e-5,
    probes: int | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Worst relative error between analytic and numeric gradients.

    ``loss_fn()`` must zero grads, run forward/backward, and return the
    scalar loss with every module's ``grads`` populated. ``probes`` limits
    the check to that many randomly chosen scalar parameters per layer.
    """
    loss_fn()
    # snapshot every analytic gradient before any probe perturbs the model
    snapshot = {}
    for m_idx, module in enumerate(modules):
        for l_idx, layer in enumerate(module.layers):
            for name in sorted(layer.params):
                snapshot[(m_idx, l_idx, name)] = layer.grads[name].copy()
    worst = 0.0
    for m_idx, module in enumerate(modules):
        for l_idx, layer in enumerate(module.layers):
            for name in sorted(layer.params):
                param = layer.params[name]
                grad = snapshot[(m_idx, l_idx, name)].reshape(-1)
                flat = param.reshape(-1)
                idx = np.arange(flat.size)
                if probes is not None and flat.size > probes:
                    assert rng is not None, "probes requires an rng"
                    idx = rng.choice(flat.size, size=probes, replace=False)
                for i in idx:
                    keep = flat[i]
                    flat[i] = keep + h
                    up = loss_fn()
                    flat[i] = keep - h
                    down = loss_fn()
                    flat[i] = keep
                    numeric = (up - down) / (2 * h)
                    worst = max(worst, _rel_err(grad[i], numeric))
    # restore consistent grads for the unperturbed point
    loss_fn()
    return worst
