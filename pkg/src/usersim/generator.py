"""Policy imitator: maps a state to a synthetic recommended-item embedding."""

from __future__ import annotations

import numpy as np

from .discriminator import prob_fake
from .encoder import Batch, encode_states, feedback_embed, init_state_encoder, state_arrays
from .errors import ContractError
from .nn import ParameterStore
from .nn import tensor as T
from .nn.layers import dense_forward, dense_view, init_dense

PROB_FLOOR = 1e-12

__all__ = ["Generator", "feedback_embed", "gen_sup_loss", "gen_unsup_loss", "gen_loss",
           "sup_loss_from_outputs", "unsup_loss_from_probs"]


class Generator:
    """GRU encoder plus a two-layer tanh decoder into item-embedding space.

    Parameters are drawn from ``rng`` (a ``numpy.random.Generator`` or an
    int seed) in a fixed order, so equal seeds give equal networks.
    """

    def __init__(self, embedding_dim=20, feedback_dim=10, hidden=128, k=2, rng=0,
                 decoder_layers=2):
        if decoder_layers < 1:
            raise ContractError("the decoder needs at least one layer")
        rng = np.random.default_rng(rng)
        self.embedding_dim = embedding_dim
        self.feedback_dim = feedback_dim
        self.hidden = hidden
        self.k = k
        self.decoder_layers = decoder_layers
        self.store = ParameterStore()
        init_state_encoder(self.store, rng, embedding_dim, feedback_dim, hidden, k)
        for i in range(decoder_layers):
            out = embedding_dim if i == decoder_layers - 1 else hidden
            init_dense(self.store, f"decoder.{i}", rng, hidden, out)

    def tensors(self, frozen=False):
        return self.store.frozen() if frozen else dict(self.store.items())

    def encode(self, state_emb, state_onehot, frozen=False):
        return encode_states(state_emb, state_onehot, self.tensors(frozen))

    def forward(self, state_emb, state_onehot, frozen=False):
        """Generated action embeddings, ``[B, |E|]``, every entry in (-1, 1)."""
        tensors = self.tensors(frozen)
        h = encode_states(state_emb, state_onehot, tensors)
        for i in range(self.decoder_layers):
            h = dense_forward(h, dense_view(tensors, f"decoder.{i}", "tanh"))
        return h

    def generate(self, state_emb, state_onehot):
        """Plain-array generation with no graph recorded into the parameters."""
        return self.forward(state_emb, state_onehot, frozen=True).data

    def generate_state(self, state, catalog):
        emb, oh = state_arrays(state, catalog, self.k)
        return self.generate(emb, oh)[0]

    def encode_state(self, state, catalog):
        emb, oh = state_arrays(state, catalog, self.k)
        return self.encode(emb, oh, frozen=True).data[0]


def sup_loss_from_outputs(generated, targets):
    """Batch mean of the squared Euclidean distance ``||target - generated||^2``."""
    generated = T._wrap(generated)
    targets = np.asarray(targets, dtype=np.float64)
    if generated.shape[0] == 0:
        raise ContractError("supervised generator loss on an empty batch")
    diff = T.sub(generated, targets)
    return T.mul(T.sum_(T.square(diff)), 1.0 / generated.shape[0])


def unsup_loss_from_probs(fake_probs, k=2):
    """Batch mean of ``log D(s, G(s))`` where ``D`` is the fake-block mass.

    Works for both the ``2K`` head (fake block = last ``K`` slots) and the
    ``K + 1`` head (single fake slot).
    """
    mass = prob_fake(fake_probs, k)
    return T.mean(T.log(mass, floor=PROB_FLOOR))


def gen_sup_loss(gen, batch: Batch):
    if len(batch) == 0:
        raise ContractError("supervised generator loss on an empty batch")
    return sup_loss_from_outputs(gen.forward(batch.state_emb, batch.state_onehot),
                                 batch.action_emb)


def gen_unsup_loss(gen, disc, batch: Batch):
    """Adversarial generator term; the discriminator is used through frozen constants."""
    fake = gen.forward(batch.state_emb, batch.state_onehot)
    probs = disc.probs(batch.state_emb, batch.state_onehot, fake, frozen=True)
    return unsup_loss_from_probs(probs, disc.k)


def gen_loss(gen, disc, batch: Batch, beta=1.0, parts=None):
    """``unsup + beta * sup`` sharing one generator forward pass.

    When ``parts`` is a dict, the component values are stored in it under
    ``"unsup"``, ``"sup"`` and ``"total"``.
    """
    if beta < 0:
        raise ContractError(f"beta must be >= 0, got {beta}")
    if len(batch) == 0:
        raise ContractError("generator loss on an empty batch")
    fake = gen.forward(batch.state_emb, batch.state_onehot)
    probs = disc.probs(batch.state_emb, batch.state_onehot, fake, frozen=True)
    unsup = unsup_loss_from_probs(probs, disc.k)
    sup = sup_loss_from_outputs(fake, batch.action_emb)
    total = unsup if beta == 0 else T.add(unsup, T.mul(sup, beta))
    if parts is not None:
        parts["unsup"] = unsup.item()
        parts["sup"] = sup.item()
        parts["total"] = total.item()
    return total
