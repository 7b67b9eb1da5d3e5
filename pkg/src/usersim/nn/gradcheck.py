"""Central finite-difference check of analytic gradients."""

from __future__ import annotations

import numpy as np

from .tensor import backward


def numeric_gradient(forward, store, name, h=1e-5):
    t = store[name]
    flat = t.data.reshape(-1)
    grad = np.zeros_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        plus = float(forward().data)
        flat[i] = orig - h
        minus = float(forward().data)
        flat[i] = orig
        grad[i] = (plus - minus) / (2.0 * h)
    return grad.reshape(t.data.shape)


def grad_check(forward, store, h=1e-5, names=None):
    """Max relative error between backprop and central differences.

    ``forward`` is a zero-argument callable returning a scalar Tensor built
    from the tensors in ``store``. The error of one entry is
    ``|analytic - numeric| / max(1, |analytic|, |numeric|)``.
    """
    names = list(store) if names is None else list(names)
    store.zero_grad()
    backward(forward())
    analytic = {n: store.grad(n).copy() for n in names}
    store.zero_grad()
    worst = 0.0
    for n in names:
        num = numeric_gradient(forward, store, n, h)
        a = analytic[n]
        denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(num)))
        err = np.abs(a - num) / denom
        if err.size:
            worst = max(worst, float(err.max()))
    return worst
