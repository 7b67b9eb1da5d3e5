"""Classification and ranking metrics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .errors import ContractError, UndefinedMetricError


@dataclass(frozen=True)
class ScoredLabel:
    score: float
    label: int


@dataclass(frozen=True)
class Ranking:
    """Items best first plus a relevance grade per item (missing = 0)."""

    items: tuple
    relevance: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(self.items))
        if len(set(self.items)) != len(self.items):
            raise ContractError("a ranking cannot contain duplicate items")

    def gains(self):
        return np.array([float(self.relevance.get(i, 0.0)) for i in self.items])


def _binary(values, name):
    arr = np.asarray(values)
    if arr.size and not np.isin(arr, (0, 1, True, False)).all():
        raise ContractError(f"{name} must be binary")
    return arr.astype(bool)


def f1(predictions, labels):
    """Harmonic mean of precision and recall for the positive class (0 if both are 0)."""
    pred = _binary(predictions, "predictions")
    lab = _binary(labels, "labels")
    if pred.shape != lab.shape:
        raise ContractError(f"{pred.size} predictions for {lab.size} labels")
    if pred.size == 0:
        raise ContractError("F1 of an empty sample")
    tp = int(np.sum(pred & lab))
    fp = int(np.sum(pred & ~lab))
    fn = int(np.sum(~pred & lab))
    if tp == 0:
        return 0.0
    # same as 2PR/(P+R), with a single rounding
    return 2 * tp / (2 * tp + fp + fn)


def _split_samples(scores, labels):
    if labels is None:
        samples = list(scores)
        scores = [s.score for s in samples]
        labels = [s.label for s in samples]
    s = np.asarray(scores, dtype=np.float64)
    y = _binary(labels, "labels")
    if s.shape != y.shape:
        raise ContractError(f"{s.size} scores for {y.size} labels")
    if not np.all(np.isfinite(s)):
        raise ContractError("scores must be finite")
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == y.size:
        raise UndefinedMetricError("AUC needs at least one positive and one negative label")
    return s, y


def auc(scores, labels=None):
    """Probability that a random positive outscores a random negative (ties count 1/2).

    Accepts ``(scores, labels)`` or a single sequence of :class:`ScoredLabel`.
    Computed exactly from mid-ranks (Mann-Whitney U).
    """
    s, y = _split_samples(scores, labels)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    ranks = rankdata(s)
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def roc_curve(scores, labels):
    """False/true positive rates at every distinct threshold, from (0, 0) to (1, 1)."""
    s, y = _split_samples(scores, labels)
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    distinct = np.flatnonzero(np.diff(s)) if s.size > 1 else np.array([], dtype=int)
    cut = np.r_[distinct, s.size - 1]
    tps = np.cumsum(y)[cut]
    fps = (cut + 1) - tps
    tpr = np.r_[0.0, tps / y.sum()]
    fpr = np.r_[0.0, fps / (y.size - y.sum())]
    return fpr, tpr


def auc_trapezoid(scores, labels=None):
    """Area under the ROC curve by the trapezoidal rule."""
    fpr, tpr = roc_curve(*((scores, labels) if labels is not None else _unzip(scores)))
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))


def _unzip(samples):
    samples = list(samples)
    return [x.score for x in samples], [x.label for x in samples]


def average_precision(ranking):
    """Mean over relevant positions ``r`` of (relevant items in top r) / r."""
    rel = ranking.gains() > 0
    if not rel.any():
        raise ContractError("average precision needs at least one relevant item in the ranking")
    hits = np.cumsum(rel)
    positions = np.arange(1, rel.size + 1)
    return float(np.mean(hits[rel] / positions[rel]))


def map_metric(rankings):
    rankings = list(rankings)
    if not rankings:
        raise ContractError("MAP of zero rankings")
    return float(np.mean([average_precision(r) for r in rankings]))


def dcg(gains, k):
    gains = np.asarray(gains, dtype=np.float64)[:k]
    return float(np.sum(gains / np.log2(np.arange(2, gains.size + 2))))


def ndcg_at_k(ranking, k):
    """DCG of the top ``k`` divided by the ideal DCG; 0 when nothing is relevant."""
    if k < 1:
        raise ContractError(f"k must be >= 1, got {k}")
    ideal = dcg(sorted(ranking.relevance.values(), reverse=True), k)
    if ideal == 0:
        return 0.0
    return dcg(ranking.gains(), k) / ideal


def squared_distances(g, catalog):
    g = np.asarray(g, dtype=np.float64)
    diff = catalog.embeddings - g
    return np.einsum("ij,ij->i", diff, diff)


def rank_catalog(g, catalog, k=None, relevance=None):
    """Catalog items by ascending squared distance to ``g``; ties by item id.

    ``k`` truncates the list. ``relevance`` is attached to the returned
    :class:`Ranking` unchanged.
    """
    if len(catalog) == 0:
        raise ContractError("cannot rank an empty catalog")
    d = squared_distances(g, catalog)
    order = np.lexsort((catalog.lexical_rank, d))
    if k is not None:
        order = order[:k]
    return Ranking(tuple(catalog.ids[i] for i in order), dict(relevance or {}))


def rank_of_items(generated, targets, catalog):
    """1-based rank of each target row under :func:`rank_catalog`'s ordering.

    ``generated`` is ``[B, |E|]``, ``targets`` holds catalog row indices.
    """
    generated = np.atleast_2d(np.asarray(generated, dtype=np.float64))
    emb = catalog.embeddings
    ids = catalog.lexical_rank
    ranks = np.empty(len(targets), dtype=np.intp)
    for b, t in enumerate(targets):
        diff = emb - generated[b]
        row = np.einsum("ij,ij->i", diff, diff)
        dt = row[t]
        ranks[b] = 1 + int(np.sum(row < dt)) + int(np.sum((row == dt) & (ids < ids[t])))
    return ranks
