"""Dense and GRU layers built on :mod:`usersim.nn.tensor`.

Layer parameters are plain dataclasses of :class:`Tensor` references so the
same forward code runs on trainable parameters and on frozen constant views.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeError
from . import tensor as T

ACTIVATIONS = ("identity", "tanh")


@dataclass
class DenseParams:
    weight: T.Tensor  # [out, in]
    bias: T.Tensor  # [out]
    activation: str = "identity"

    @property
    def in_dim(self):
        return self.weight.shape[1]

    @property
    def out_dim(self):
        return self.weight.shape[0]


@dataclass
class GruParams:
    w_z: T.Tensor
    u_z: T.Tensor
    b_z: T.Tensor
    w_r: T.Tensor
    u_r: T.Tensor
    b_r: T.Tensor
    w_h: T.Tensor
    u_h: T.Tensor
    b_h: T.Tensor

    @property
    def hidden(self):
        return self.u_z.shape[0]

    @property
    def in_dim(self):
        return self.w_z.shape[1]


GRU_FIELDS = ("w_z", "u_z", "b_z", "w_r", "u_r", "b_r", "w_h", "u_h", "b_h")


def uniform_init(rng, out_dim, in_dim):
    bound = 1.0 / np.sqrt(in_dim)
    return rng.uniform(-bound, bound, size=(out_dim, in_dim))


def init_dense(store, prefix, rng, in_dim, out_dim):
    store.add(f"{prefix}.weight", uniform_init(rng, out_dim, in_dim))
    store.add(f"{prefix}.bias", np.zeros(out_dim))


def init_gru(store, prefix, rng, in_dim, hidden):
    for gate in ("z", "r", "h"):
        store.add(f"{prefix}.w_{gate}", uniform_init(rng, hidden, in_dim))
        store.add(f"{prefix}.u_{gate}", uniform_init(rng, hidden, hidden))
        store.add(f"{prefix}.b_{gate}", np.zeros(hidden))


def dense_view(tensors, prefix, activation="identity"):
    if activation not in ACTIVATIONS:
        raise ValueError(f"unknown activation {activation!r}")
    return DenseParams(tensors[f"{prefix}.weight"], tensors[f"{prefix}.bias"], activation)


def gru_view(tensors, prefix):
    return GruParams(**{f: tensors[f"{prefix}.{f}"] for f in GRU_FIELDS})


def dense_forward(x, p: DenseParams):
    """``activation(W x + b)`` for a vector or a batch of row vectors."""
    x = T._wrap(x)
    if x.shape[-1] != p.in_dim:
        raise ShapeError(f"dense input has dim {x.shape[-1]}, layer expects {p.in_dim}")
    y = T.add(T.matmul(x, p.weight), p.bias)
    if p.activation == "tanh":
        y = T.tanh(y)
    return y


def gru_step(h_prev, x, p: GruParams):
    """One GRU step.

    z = sigmoid(W_z x + U_z h + b_z), r = sigmoid(W_r x + U_r h + b_r),
    candidate = tanh(W_h x + U_h (r * h) + b_h), h' = (1 - z) h + z candidate.
    """
    h_prev, x = T._wrap(h_prev), T._wrap(x)
    if h_prev.shape[-1] != p.hidden:
        raise ShapeError(f"hidden state has dim {h_prev.shape[-1]}, cell expects {p.hidden}")
    if x.shape[-1] != p.in_dim:
        raise ShapeError(f"GRU input has dim {x.shape[-1]}, cell expects {p.in_dim}")
    z = T.sigmoid(T.matmul(x, p.w_z) + T.matmul(h_prev, p.u_z) + p.b_z)
    r = T.sigmoid(T.matmul(x, p.w_r) + T.matmul(h_prev, p.u_r) + p.b_r)
    cand = T.tanh(T.matmul(x, p.w_h) + T.matmul(r * h_prev, p.u_h) + p.b_h)
    return h_prev + z * (cand - h_prev)


def gru_encode(inputs, p: GruParams):
    """Run the cell over ``inputs`` (a list of per-step tensors) from h = 0."""
    first = T._wrap(inputs[0])
    h = T.Tensor(np.zeros(first.shape[:-1] + (p.hidden,)))
    for x in inputs:
        h = gru_step(h, x, p)
    return h
