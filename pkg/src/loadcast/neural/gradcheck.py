"""Finite-difference verification of analytic gradients.

Central differences with a configurable step on the batch MSE loss,
evaluated in inference mode so the objective is deterministic. The
relative error for one entry is |analytic - numeric| divided by
max(|analytic| + |numeric|, floor).
"""

from __future__ import annotations

import numpy as np

from .models import Model


def batch_mse(model: Model, xh, xv, y) -> float:
    preds = model.forward(xh, xv, training=False)
    return float(np.mean((preds - y) ** 2))


def analytic_gradients(model: Model, xh, xv, y) -> dict[str, np.ndarray]:
    preds = model.forward(xh, xv, training=False)
    model.zero_grads()
    model.backward(2.0 * (preds - y) / len(y))
    return {name: grad.copy() for name, _, grad in model.named_parameters()}


def _loss_and_patterns(model: Model, xh, xv, y):
    loss = batch_mse(model, xh, xv, y)
    return loss, model.active_patterns()


def _same_patterns(a, b) -> bool:
    return all(np.array_equal(x, z) for x, z in zip(a, b))


def max_relative_error(model: Model, xh, xv, y, step: float = 1e-5,
                       atol: float = 1e-8, floor: float = 1e-8) -> float:
    """Worst relative disagreement over every parameter entry.

    Two probe situations are excluded. Entries whose probe points land
    on opposite sides of a rectifier kink measure nothing (the loss is
    not differentiable there). Entries where both sides agree within
    atol sit below the floating-point noise floor of the difference
    quotient (ulp(loss) / step), where relative error is meaningless.
    """
    analytic = analytic_gradients(model, xh, xv, y)
    worst = 0.0
    for name, param, _ in model.named_parameters():
        flat = param.reshape(-1)
        grad = analytic[name].reshape(-1)
        for idx in range(flat.size):
            original = flat[idx]
            flat[idx] = original + step
            upper, pattern_up = _loss_and_patterns(model, xh, xv, y)
            flat[idx] = original - step
            lower, pattern_down = _loss_and_patterns(model, xh, xv, y)
            flat[idx] = original
            if not _same_patterns(pattern_up, pattern_down):
                continue
            numeric = (upper - lower) / (2.0 * step)
            if abs(grad[idx] - numeric) <= atol:
                continue
            err = abs(grad[idx] - numeric) / max(abs(grad[idx]) + abs(numeric), floor)
            worst = max(worst, err)
    return worst
