"""Real/fake judge that doubles as the user-feedback predictor.

The head emits logits in two blocks, real first then fake. Within a block
slots run from the most positive feedback class down, so for ``K = 2`` the
layout is ``[real-positive, real-negative, fake-positive, fake-negative]``.
Feedback class ``c`` therefore lives in slot ``K - 1 - c`` of each block.
The three-class variant keeps the real block and collapses the fake block
into one slot.
"""

from __future__ import annotations

import numpy as np

from .encoder import Batch, encode_states, init_state_encoder, state_arrays
from .errors import ContractError, ShapeError
from .nn import ParameterStore
from .nn import tensor as T
from .nn.layers import dense_forward, dense_view, init_dense

PROB_FLOOR = 1e-12


def feedback_slot(feedback, k=2):
    """Slot of feedback class(es) inside a block."""
    return k - 1 - np.asarray(feedback, dtype=np.intp)


def slot_feedback(slot, k=2):
    return k - 1 - np.asarray(slot, dtype=np.intp)


class Discriminator:
    def __init__(self, embedding_dim=20, feedback_dim=10, hidden=128, k=2, rng=0,
                 action_dim=32, head_hidden=128, three_class=False):
        rng = np.random.default_rng(rng)
        self.embedding_dim = embedding_dim
        self.feedback_dim = feedback_dim
        self.hidden = hidden
        self.k = k
        self.action_dim = action_dim
        self.head_hidden = head_hidden
        self.three_class = three_class
        self.store = ParameterStore()
        init_state_encoder(self.store, rng, embedding_dim, feedback_dim, hidden, k)
        init_dense(self.store, "action", rng, embedding_dim, action_dim)
        init_dense(self.store, "head.0", rng, hidden + action_dim, head_hidden)
        init_dense(self.store, "head.1", rng, head_hidden, self.n_outputs)

    @property
    def n_outputs(self):
        return self.k + 1 if self.three_class else 2 * self.k

    def tensors(self, frozen=False):
        return self.store.frozen() if frozen else dict(self.store.items())

    def logits(self, state_emb, state_onehot, action_emb, frozen=False):
        """Class logits ``[B, n_outputs]`` for (state, action) pairs.

        ``action_emb`` may be real item embeddings (array) or a generator
        output Tensor; gradients flow into the latter only if it carries a graph.
        """
        tensors = self.tensors(frozen)
        action = T._wrap(action_emb)
        if action.shape[-1] != self.embedding_dim:
            raise ShapeError(f"action has dim {action.shape[-1]}, expected {self.embedding_dim}")
        p = encode_states(state_emb, state_onehot, tensors)
        e = dense_forward(action, dense_view(tensors, "action", "tanh"))
        h = dense_forward(T.concat([p, e], axis=-1), dense_view(tensors, "head.0", "tanh"))
        return dense_forward(h, dense_view(tensors, "head.1", "identity"))

    def probs(self, state_emb, state_onehot, action_emb, frozen=False):
        return class_probs(self.logits(state_emb, state_onehot, action_emb, frozen))

    def classify(self, state, action_emb, catalog):
        """Logits for one State and one action embedding, as a plain array."""
        emb, oh = state_arrays(state, catalog, self.k)
        return self.logits(emb, oh, np.asarray(action_emb, dtype=np.float64)[None],
                           frozen=True).data[0]

    def predict_batch(self, batch: Batch):
        """``(classes, scores, real_block)`` for every row of a batch.

        ``real_block`` is indexed by feedback class and renormalised to sum 1.
        """
        p = self.probs(batch.state_emb, batch.state_onehot, batch.action_emb, frozen=True).data
        return predict_from_probs(p, self.k)

    def predict_feedback(self, state, item, catalog):
        emb = catalog.embedding(item)
        p = class_probs(self.classify(state, emb, catalog)).data
        classes, scores, _ = predict_from_probs(p[None], self.k)
        return int(classes[0]), float(scores[0])


def class_probs(logits):
    return T.softmax(logits)


def _block(probs, lo, hi):
    probs = T._wrap(probs)
    return T.sum_(T.getitem(probs, (Ellipsis, slice(lo, hi))), axis=-1)


def prob_real(probs, k=2):
    """Total mass on the real block."""
    return _block(probs, 0, k)


def prob_fake(probs, k=2):
    """Total mass on the fake block (everything after the first ``k`` slots)."""
    probs = T._wrap(probs)
    return _block(probs, k, probs.shape[-1])


def predict_from_probs(probs, k=2):
    """Feedback prediction from class probabilities ``[B, n_outputs]``.

    The class is the argmax of the real block (first slot wins ties, i.e. the
    most positive class); the score is the unnormalised real-positive
    probability.
    """
    probs = np.asarray(probs, dtype=np.float64)
    real = probs[:, :k]
    slot = np.argmax(real, axis=1)
    renorm = real / real.sum(axis=1, keepdims=True)
    by_class = renorm[:, ::-1]
    return slot_feedback(slot, k), probs[:, feedback_slot(k - 1, k)], by_class


def _nll(mass):
    return T.mul(T.mean(T.log(mass, floor=PROB_FLOOR)), -1.0)


def disc_unsup_from_probs(real_probs, fake_probs, k=2):
    """``-(mean log D(s, a) + mean log D(s, G(s)))`` on real and fake probabilities."""
    real_probs, fake_probs = T._wrap(real_probs), T._wrap(fake_probs)
    if real_probs.shape[0] == 0 or fake_probs.shape[0] == 0:
        raise ContractError("unsupervised discriminator loss needs real and fake samples")
    return T.add(_nll(prob_real(real_probs, k)), _nll(prob_fake(fake_probs, k)))


def fake_targets(feedback, k=2, n_outputs=None):
    n_outputs = 2 * k if n_outputs is None else n_outputs
    if n_outputs == k + 1:
        return np.full(np.shape(feedback), k, dtype=np.intp)
    return k + feedback_slot(feedback, k)


def disc_sup_from_probs(real_probs, real_feedback, fake_probs=None, fake_feedback=None,
                        lam=0.3, k=2):
    """Cross-entropy on real pairs plus ``lam`` times cross-entropy on fakes.

    A fake pair's target is the fake-block slot of the feedback observed for
    the real pair it shadows (the single fake slot for a ``K + 1`` head).
    """
    if lam < 0:
        raise ContractError(f"lambda must be >= 0, got {lam}")
    real_probs = T._wrap(real_probs)
    if real_probs.shape[0] == 0:
        raise ContractError("supervised discriminator loss on an empty real batch")
    real_t = T.take_rows(real_probs, feedback_slot(real_feedback, k))
    loss = _nll(real_t)
    if lam == 0 or fake_probs is None:
        if lam != 0:
            raise ContractError("fake samples are required when lambda > 0")
        return loss
    fake_probs = T._wrap(fake_probs)
    if fake_probs.shape[0] == 0:
        raise ContractError("supervised discriminator loss on an empty fake batch")
    targets = fake_targets(fake_feedback, k, fake_probs.shape[-1])
    return T.add(loss, T.mul(_nll(T.take_rows(fake_probs, targets)), lam))


def combine(unsup, sup, weight):
    """``unsup + weight * sup`` for already-built loss tensors."""
    if weight < 0:
        raise ContractError(f"loss weight must be >= 0, got {weight}")
    return T.add(unsup, T.mul(sup, weight))


def _fake_input(fakes):
    # Fakes enter the discriminator update as constants.
    return fakes.detach() if isinstance(fakes, T.Tensor) else T.Tensor(fakes)


def disc_unsup_loss(disc, real: Batch, fakes):
    real_p = disc.probs(real.state_emb, real.state_onehot, real.action_emb)
    fake_p = disc.probs(real.state_emb, real.state_onehot, _fake_input(fakes))
    return disc_unsup_from_probs(real_p, fake_p, disc.k)


def disc_sup_loss(disc, real: Batch, fakes=None, lam=0.3):
    real_p = disc.probs(real.state_emb, real.state_onehot, real.action_emb)
    fake_p = None
    if fakes is not None and lam > 0:
        fake_p = disc.probs(real.state_emb, real.state_onehot, _fake_input(fakes))
    return disc_sup_from_probs(real_p, real.feedback, fake_p, real.feedback, lam, disc.k)


def disc_loss(disc, real: Batch, fakes, alpha=1.0, lam=0.3, parts=None):
    """``unsup + alpha * sup`` with one forward pass per (real, fake) side.

    ``fakes`` are generator outputs for ``real``'s states, one per real pair.
    """
    if alpha < 0:
        raise ContractError(f"alpha must be >= 0, got {alpha}")
    fakes = _fake_input(fakes)
    if fakes.shape[0] != len(real):
        raise ContractError(f"{fakes.shape[0]} fakes for {len(real)} real pairs")
    real_p = disc.probs(real.state_emb, real.state_onehot, real.action_emb)
    fake_p = disc.probs(real.state_emb, real.state_onehot, fakes)
    unsup = disc_unsup_from_probs(real_p, fake_p, disc.k)
    sup = disc_sup_from_probs(real_p, real.feedback, fake_p, real.feedback, lam, disc.k)
    total = combine(unsup, sup, alpha)
    if parts is not None:
        parts["unsup"] = unsup.item()
        parts["sup"] = sup.item()
        parts["total"] = total.item()
    return total
