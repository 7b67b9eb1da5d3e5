"""Offline evaluation of trained simulators and the comparison baselines."""

from __future__ import annotations

import hashlib
import json
import math

import numpy as np

from .data import one_hot
from .discriminator import Discriminator, disc_sup_loss
from .encoder import make_batch
from .errors import ContractError, UndefinedMetricError
from .metrics import auc, f1, rank_of_items
from .nn import ParameterStore, adam_step, backward
from .nn import tensor as T

EVAL_BATCH = 2000


def classification_report(predicted_positive, scores, labels):
    """F1 of the hard predictions and AUC of the scores; AUC is None if undefined."""
    labels = np.asarray(labels, dtype=bool)
    out = {"f1": f1(np.asarray(predicted_positive, dtype=bool), labels), "n": int(labels.size),
           "positive_rate": float(labels.mean()) if labels.size else math.nan}
    try:
        out["auc"] = auc(scores, labels)
    except UndefinedMetricError:
        out["auc"] = None
    return out


def discriminator_scores(disc, test, k=None):
    """``(predicted_classes, real_positive_scores)`` over a TransitionSet."""
    k = disc.k if k is None else k
    classes, scores = [], []
    for start in range(0, len(test), EVAL_BATCH):
        idx = np.arange(start, min(start + EVAL_BATCH, len(test)))
        c, s, _ = disc.predict_batch(make_batch(test, idx, k))
        classes.append(c)
        scores.append(s)
    if not classes:
        return np.zeros(0, dtype=np.intp), np.zeros(0)
    return np.concatenate(classes), np.concatenate(scores)


def eval_discriminator(test, disc):
    """F1 of predicted feedback classes and AUC of the real-positive score."""
    if len(test) == 0:
        raise ContractError("cannot evaluate on an empty test split")
    classes, scores = discriminator_scores(disc, test)
    positive = disc.k - 1
    return classification_report(classes == positive, scores,
                                 np.asarray(test.feedback) == positive)


def generated_actions(gen, test):
    out = []
    for start in range(0, len(test), EVAL_BATCH):
        idx = np.arange(start, min(start + EVAL_BATCH, len(test)))
        b = make_batch(test, idx, gen.k)
        out.append(gen.generate(b.state_emb, b.state_onehot))
    return np.concatenate(out) if out else np.zeros((0, gen.embedding_dim))


def ranking_scores(ranks, k=40):
    """MAP and NDCG@k when each ranking has one relevant item at ``ranks`` (1-based)."""
    ranks = np.asarray(ranks, dtype=np.float64)
    ap = 1.0 / ranks
    gain = np.where(ranks <= k, 1.0 / np.log2(ranks + 1.0), 0.0)
    return {"map": float(ap.mean()), f"ndcg@{k}": float(gain.mean()), "n": int(ranks.size)}


def eval_generator(test, gen, catalog=None, k=40, relevance="binary"):
    """Rank the whole catalog around each generated embedding.

    The logged next item is the only relevant item of each ranking. With
    ``relevance="feedback"`` its grade is the logged reward instead of 1, so
    rows whose reward is 0 contribute NDCG 0 and are left out of MAP.
    """
    if relevance not in ("binary", "feedback"):
        raise ContractError(f"relevance must be 'binary' or 'feedback', got {relevance!r}")
    if len(test) == 0:
        raise ContractError("cannot evaluate on an empty test split")
    catalog = test.catalog if catalog is None else catalog
    generated = generated_actions(gen, test)
    if catalog is test.catalog:
        targets = np.asarray(test.actions)
    else:
        targets = catalog.indices([test.catalog.ids[a] for a in test.actions])
    ranks = rank_of_items(generated, targets, catalog)
    if relevance == "binary":
        out = ranking_scores(ranks, k)
    else:
        graded = np.asarray(test.rewards) > 0
        if not graded.any():
            raise ContractError("feedback-graded relevance needs at least one rewarded row")
        out = ranking_scores(ranks[graded], k)
        out[f"ndcg@{k}"] *= graded.mean()
        out["n"] = int(ranks.size)
    out["k"] = k
    out["relevance"] = relevance
    return out


def eval_constant_generator(test, vector, k=40):
    """Ranking metrics for a generator that always emits ``vector``."""
    generated = np.broadcast_to(np.asarray(vector, dtype=np.float64),
                                (len(test), test.catalog.dim))
    return ranking_scores(rank_of_items(generated, np.asarray(test.actions), test.catalog), k)


# ---------------------------------------------------------------------------
# baselines

def baseline_random(test, seed=0):
    """Uniform scores in [0, 1]; positive when the score exceeds 0.5."""
    rng = np.random.default_rng(seed)
    scores = rng.uniform(0.0, 1.0, size=len(test))
    labels = np.asarray(test.feedback) == 1
    return classification_report(scores > 0.5, scores, labels)


def lr_features(transitions, k=2):
    """Concatenated state embeddings and feedback indicators, then the action embedding."""
    emb = transitions.catalog.embeddings
    state = np.concatenate([emb[transitions.state_items],
                            one_hot(transitions.state_feedback, k)], axis=-1)
    return np.concatenate([state.reshape(len(transitions), -1), emb[transitions.actions]], axis=1)


class SquaredLossLogistic:
    """``h(x) = sigmoid(w . x)`` fitted by Adam on ``mean 1/2 (h(x) - y)^2``.

    Weights start at zero, so an untrained model scores 0.5 everywhere.
    """

    def __init__(self, n_features):
        self.store = ParameterStore()
        self.store.add("w", np.zeros((1, n_features)))

    def scores(self, x, frozen=True):
        w = self.store.frozen()["w"] if frozen else self.store["w"]
        return T.sigmoid(T.matmul(T.Tensor(x), w))

    def predict(self, x):
        return self.scores(np.asarray(x, dtype=np.float64)).data[:, 0]

    def loss(self, x, y):
        h = self.scores(x, frozen=False)
        diff = T.sub(h, np.asarray(y, dtype=np.float64).reshape(-1, 1))
        return T.mul(T.mean(T.square(diff)), 0.5)

    def fit(self, x, y, steps=500, batch_size=500, lr=0.001, seed=0):
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        rng = np.random.default_rng(seed)
        losses = []
        for _ in range(steps):
            idx = rng.choice(len(x), size=batch_size, replace=False) if len(x) > batch_size \
                else np.arange(len(x))
            loss = self.loss(x[idx], y[idx])
            backward(loss)
            adam_step(self.store, lr)
            losses.append(loss.item())
        return losses


def baseline_lr(train, test, steps=2000, batch_size=500, lr=0.001, seed=0, k=2):
    if len(train) == 0:
        raise ContractError("LR baseline needs a non-empty training split")
    x_train, x_test = lr_features(train, k), lr_features(test, k)
    model = SquaredLossLogistic(x_train.shape[1])
    model.fit(x_train, np.asarray(train.feedback) == k - 1, steps, batch_size, lr, seed)
    scores = model.predict(x_test)
    return classification_report(scores > 0.5, scores, np.asarray(test.feedback) == k - 1)


class GruClassifier(Discriminator):
    """The discriminator's network with a ``K``-way head and no real/fake axis.

    Output slots follow the discriminator's real-block order (most positive
    class first).
    """

    @property
    def n_outputs(self):
        return self.k


def baseline_gru(train, test, config, epochs=None, seed=None):
    """GRU preference encoder + action embedding, trained with cross-entropy."""
    if len(train) == 0:
        raise ContractError("GRU baseline needs a non-empty training split")
    seed = config.seed if seed is None else seed
    epochs = config.disc_pretrain_epochs if epochs is None else epochs
    model = GruClassifier(config.embedding_dim, config.feedback_dim, config.hidden, config.k,
                          np.random.default_rng(seed), config.action_dim, config.head_hidden)
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(1)[0])
    for _ in range(epochs):
        perm = rng.permutation(len(train))
        for start in range(0, len(train), config.batch_size):
            batch = make_batch(train, perm[start:start + config.batch_size], config.k)
            loss = disc_sup_loss(model, batch, None, lam=0.0)
            backward(loss)
            adam_step(model.store, config.lr, config.adam_beta1, config.adam_beta2,
                      config.adam_eps)
    classes, scores = discriminator_scores(model, test)
    positive = config.k - 1
    return classification_report(classes == positive, scores,
                                 np.asarray(test.feedback) == positive)


# ---------------------------------------------------------------------------
# reports

def config_hash(config):
    text = config.to_text() if hasattr(config, "to_text") else json.dumps(config, sort_keys=True)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.floating, float)):
        v = float(value)
        return v if math.isfinite(v) else None
    if isinstance(value, np.integer):
        return int(value)
    return value


def write_report(path, kind, metrics, config=None, trace=None, notes=None):
    """Write one JSON report; see README for the schema."""
    payload = {
        "format": "usersim-report",
        "version": 1,
        "kind": kind,
        "config_hash": config_hash(config) if config is not None else None,
        "config": config.to_dict() if hasattr(config, "to_dict") else config,
        "metrics": metrics,
        "trace": trace or [],
        "notes": notes or [],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=False)
        fh.write("\n")
    return payload


# ---------------------------------------------------------------------------
# sensitivity sweeps

SWEEP_PARAMS = {"N": "n", "lambda": "lam"}

# qualitative reference behaviour, recorded next to the measured values
SWEEP_CLAIMS = {
    "lambda": "reference claim: discriminator AUC peaks at lambda=0.3 (informational, not gated)",
    "N": "reference claim: a longer browsing history N improves AUC (informational, not gated)",
}


def parse_sweep_values(param, text):
    if param not in SWEEP_PARAMS:
        raise ContractError(f"--param must be one of {sorted(SWEEP_PARAMS)}, got {param!r}")
    cast = int if param == "N" else float
    try:
        values = [cast(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ContractError(f"cannot parse {text!r} as {cast.__name__} values") from None
    if not values:
        raise ContractError("no sweep values given")
    return values


def sweep(dataset, config, param, values, train_fn=None):
    """Train once per value of ``param`` and report test AUC/F1 for each.

    Returns ``(rows, notes)``; ``rows`` has one dict per value in order.
    """
    from .training import train_simulator

    train_fn = train_fn or train_simulator
    field_name = SWEEP_PARAMS.get(param)
    if field_name is None:
        raise ContractError(f"unknown sweep parameter {param!r}")
    rows = []
    for value in values:
        cfg = config.replace(**{field_name: value})
        result = train_fn(dataset, cfg)
        metrics = eval_discriminator(result.test, result.discriminator)
        rows.append({"param": param, "value": value, "auc": metrics["auc"], "f1": metrics["f1"],
                     "n_test": metrics["n"], "rounds": len(result.trace)})
    notes = [SWEEP_CLAIMS[param]]
    scored = [r for r in rows if r["auc"] is not None]
    if scored:
        best = max(scored, key=lambda r: r["auc"])
        notes.append(f"observed: best AUC {best['auc']:.4f} at {param}={best['value']}")
    return rows, notes
