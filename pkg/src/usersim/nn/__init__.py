"""Minimal differentiable-computation substrate (numpy, float64)."""

from .gradcheck import grad_check, numeric_gradient
from .layers import (
    DenseParams,
    GruParams,
    dense_forward,
    dense_view,
    gru_encode,
    gru_step,
    gru_view,
    init_dense,
    init_gru,
)
from .optim import AdamConfig, AdamState, ParameterStore, adam_step
from .tensor import Tensor, backward, softmax

__all__ = [
    "AdamConfig",
    "AdamState",
    "DenseParams",
    "GruParams",
    "ParameterStore",
    "Tensor",
    "adam_step",
    "backward",
    "dense_forward",
    "dense_view",
    "grad_check",
    "gru_encode",
    "gru_step",
    "gru_view",
    "init_dense",
    "init_gru",
    "numeric_gradient",
    "softmax",
]
