"""State encoding shared by the generator and the discriminator.

Each state position ``n`` becomes ``I_n = concat(e_n, tanh(W_F f_n + b_F))``
and a GRU run over ``I_1 .. I_N`` from a zero hidden state yields the
preference vector (its final hidden state). The generator and the
discriminator each own a separate set of these parameters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import one_hot
from .errors import ShapeError
from .nn import tensor as T
from .nn.layers import dense_view, gru_encode, gru_view, init_dense, init_gru


@dataclass
class Batch:
    """Model-ready arrays for a minibatch of transitions."""

    state_emb: np.ndarray  # [B, N, |E|]
    state_onehot: np.ndarray  # [B, N, K]
    action_emb: np.ndarray  # [B, |E|]
    feedback: np.ndarray  # [B] class indices

    def __len__(self):
        return self.state_emb.shape[0]


def make_batch(transitions, idx=None, k=2):
    ts = transitions if idx is None else transitions.subset(idx)
    emb = ts.catalog.embeddings
    return Batch(emb[ts.state_items], one_hot(ts.state_feedback, k), emb[ts.actions],
                 np.asarray(ts.feedback, dtype=np.intp))


def state_arrays(state, catalog, k=2):
    """``(state_emb, state_onehot)`` with a leading batch axis of 1 for one State."""
    rows = catalog.indices(state.items)
    return catalog.embeddings[rows][None], one_hot(np.asarray(state.feedback), k)[None]


def init_state_encoder(store, rng, embedding_dim, feedback_dim, hidden, k):
    init_dense(store, "feedback", rng, k, feedback_dim)
    init_gru(store, "encoder", rng, embedding_dim + feedback_dim, hidden)


def feedback_embed(onehot, tensors):
    """``F_n = tanh(W_F f_n + b_F)``; the same weights serve every position."""
    p = dense_view(tensors, "feedback", "tanh")
    onehot = T._wrap(onehot)
    if onehot.shape[-1] != p.in_dim:
        raise ShapeError(f"feedback indicator has length {onehot.shape[-1]}, expected {p.in_dim}")
    return T.tanh(T.add(T.matmul(onehot, p.weight), p.bias))


def encode_states(state_emb, state_onehot, tensors):
    """Final GRU hidden state for a batch of states, shape ``[B, H]``."""
    state_emb = np.asarray(state_emb, dtype=np.float64)
    state_onehot = np.asarray(state_onehot, dtype=np.float64)
    if state_emb.ndim != 3 or state_onehot.ndim != 3:
        raise ShapeError("states must be batched: [B, N, |E|] and [B, N, K]")
    if state_emb.shape[:2] != state_onehot.shape[:2]:
        raise ShapeError("state embeddings and feedback disagree on batch or length")
    gru = gru_view(tensors, "encoder")
    steps = []
    for n in range(state_emb.shape[1]):
        fb = feedback_embed(state_onehot[:, n, :], tensors)
        steps.append(T.concat([T.Tensor(state_emb[:, n, :]), fb], axis=-1))
    return gru_encode(steps, gru)
