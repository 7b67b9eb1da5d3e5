"""Synthetic session logs with a known (planted) user model.

Every session has a latent unit-norm preference ``u``. A logging policy
recommends item ``e`` with probability proportional to
``exp(temperature * <u, e>)`` and the user reacts positively iff
``<u, e> + noise > threshold`` with ``noise ~ Normal(0, noise_scale)``. The
true positive probability of any (session, item) pair is therefore
``Phi((<u, e> - threshold) / noise_scale)``.

With ``n_segments > 0`` preferences are drawn around that many random
directions (user segments); ``segment_spread`` controls the jitter. With
``n_segments = 0`` they are isotropic.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np
from scipy.special import ndtr

from .config import parse_key_values
from .data import ItemCatalog, Session, transitions_from_sessions
from .errors import ConfigError


@dataclass
class SynthConfig:
    n_items: int = 500
    n_sessions: int = 2000
    session_length: int = 50
    embedding_dim: int = 20
    noise_scale: float = 0.05
    threshold: float = 0.0
    temperature: float = 1.0
    n_segments: int = 4
    segment_spread: float = 0.3
    k: int = 2

    def validate(self):
        for name in ("n_items", "n_sessions", "session_length", "embedding_dim"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.noise_scale < 0:
            raise ConfigError("noise_scale must be >= 0")
        if self.n_segments < 0 or self.segment_spread < 0:
            raise ConfigError("n_segments and segment_spread must be >= 0")
        if self.k != 2:
            raise ConfigError("the synthetic world only produces binary feedback (k=2)")
        return self

    @classmethod
    def from_file(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read())

    @classmethod
    def from_text(cls, text):
        return cls(**parse_key_values(text, {f.name: f.type for f in fields(cls)}, cls)).validate()


@dataclass
class SynthWorld:
    config: SynthConfig
    seed: int
    catalog: ItemCatalog
    sessions: list
    preferences: np.ndarray  # [n_sessions, |E|], unit rows

    def affinity(self, session_index, items):
        """``<u, e>`` for one session and one or more items (ids or catalog rows)."""
        rows = _rows(self.catalog, items)
        return self.catalog.embeddings[rows] @ self.preferences[session_index]

    def positive_probability(self, session_index, items):
        """True probability of positive feedback for a session and item(s)."""
        margin = self.affinity(session_index, items) - self.config.threshold
        return _phi(margin, self.config.noise_scale)

    def transition_scores(self, transitions):
        """Planted positive probability for every row of a TransitionSet."""
        emb = transitions.catalog.embeddings[transitions.actions]
        margin = np.einsum("ij,ij->i", emb, self.preferences[transitions.sessions])
        return _phi(margin - self.config.threshold, self.config.noise_scale)

    def transitions(self, n):
        return transitions_from_sessions(self.sessions, self.catalog, n)


def _rows(catalog, items):
    if isinstance(items, str):
        return catalog.index(items)
    items = np.asarray(items)
    if items.dtype.kind in "iu":
        return items
    return catalog.indices(list(items))


def _phi(margin, scale):
    if scale == 0:
        return np.where(margin > 0, 1.0, np.where(margin < 0, 0.0, 0.5))
    return ndtr(margin / scale)


def synth_world(config=None, seed=0):
    """Draw a catalog and session logs; bit-identical for a given (config, seed)."""
    cfg = (config or SynthConfig()).validate()
    rng = np.random.default_rng(seed)
    c, e = cfg.n_items, cfg.embedding_dim
    emb = rng.uniform(-0.99, 0.99, size=(c, e))
    width = len(str(c - 1))
    catalog = ItemCatalog([f"i{j:0{width}d}" for j in range(c)], emb)

    if cfg.n_segments:
        centers = rng.normal(size=(cfg.n_segments, e))
        centers /= np.linalg.norm(centers, axis=1, keepdims=True)
        seg = rng.integers(cfg.n_segments, size=cfg.n_sessions)
        prefs = centers[seg] + cfg.segment_spread * rng.normal(size=(cfg.n_sessions, e)) / np.sqrt(e)
    else:
        prefs = rng.normal(size=(cfg.n_sessions, e))
    prefs /= np.linalg.norm(prefs, axis=1, keepdims=True)

    swidth = len(str(cfg.n_sessions - 1))
    sessions = []
    for s in range(cfg.n_sessions):
        score = emb @ prefs[s]
        logits = cfg.temperature * score
        p = np.exp(logits - logits.max())
        p /= p.sum()
        items = rng.choice(c, size=cfg.session_length, p=p)
        noise = rng.normal(0.0, 1.0, size=cfg.session_length) * cfg.noise_scale
        fb = (score[items] + noise > cfg.threshold).astype(int)
        sessions.append(Session(f"s{s:0{swidth}d}", [catalog.ids[j] for j in items], fb))
    return SynthWorld(cfg, seed, catalog, sessions, prefs)
