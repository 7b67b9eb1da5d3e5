"""Parameter storage and the Adam optimizer."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractError, NumericError
from .tensor import DTYPE, Tensor


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0


@dataclass
class AdamConfig:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


class ParameterStore:
    """Named parameters, their gradient slots and Adam moments.

    Iteration order is insertion order, which fixes the layout of
    checkpoints and the order in which ``grad_check`` perturbs entries.
    """

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._adam: dict[str, AdamState] = {}

    def add(self, name, value):
        if name in self._params:
            raise ContractError(f"duplicate parameter name {name!r}")
        value = np.array(value, dtype=DTYPE, copy=True)
        t = Tensor(value, requires_grad=True, name=name)
        self._params[name] = t
        self._adam[name] = AdamState(np.zeros_like(value), np.zeros_like(value))
        return t

    def __getitem__(self, name) -> Tensor:
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def __iter__(self):
        return iter(self._params)

    def __len__(self):
        return len(self._params)

    def names(self):
        return list(self._params)

    def items(self):
        return self._params.items()

    def adam_state(self, name) -> AdamState:
        return self._adam[name]

    def grad(self, name):
        g = self._params[name].grad
        return np.zeros_like(self._params[name].data) if g is None else g

    def zero_grad(self):
        for t in self._params.values():
            t.grad = np.zeros_like(t.data)

    def frozen(self):
        """Constant views sharing data with the parameters; no gradient flows into them."""
        return {name: Tensor(t.data) for name, t in self._params.items()}

    def snapshot(self):
        return {name: t.data.copy() for name, t in self._params.items()}

    def load(self, arrays):
        missing = set(self._params) - set(arrays)
        if missing:
            raise ContractError(f"missing parameters: {sorted(missing)}")
        for name, t in self._params.items():
            value = np.asarray(arrays[name], dtype=DTYPE)
            if value.shape != t.data.shape:
                raise ContractError(
                    f"parameter {name!r}: expected shape {t.data.shape}, got {value.shape}")
            t.data = value.copy()
            t.grad = np.zeros_like(t.data)

    def num_entries(self):
        return sum(t.data.size for t in self._params.values())


def adam_step(store, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
    """Apply one bias-corrected Adam update to every parameter in ``store``.

    Moments decay on every call. A parameter whose gradient is identically
    zero keeps its value, so frozen or unused tensors never drift on stale
    momentum. Gradients are cleared afterwards.
    """
    if lr <= 0:
        raise ContractError(f"learning rate must be positive, got {lr}")
    grads = {}
    for name in store:
        g = store.grad(name)
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter {name!r}")
        grads[name] = g
    for name, t in store.items():
        g = grads[name]
        state = store.adam_state(name)
        state.step += 1
        state.m = beta1 * state.m + (1.0 - beta1) * g
        state.v = beta2 * state.v + (1.0 - beta2) * (g * g)
        if not g.any():
            continue
        m_hat = state.m / (1.0 - beta1 ** state.step)
        v_hat = state.v / (1.0 - beta2 ** state.step)
        t.data = t.data - lr * m_hat / (np.sqrt(v_hat) + eps)
    store.zero_grad()
    return store
