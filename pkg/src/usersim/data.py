"""Logs, item catalog, MDP transitions and dataset persistence.

Feedback classes are integers ``0..K-1``. For the default ``K = 2`` class 0
is a negative reaction (skip) and class 1 a positive one (click/purchase),
so the indicator vector of a skip is ``[1, 0]``.
"""

from __future__ import annotations

import functools
import json
import logging
import warnings
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    ContractError,
    DataError,
    ParseError,
    UnknownItemError,
    UnsatisfiableError,
)

log = logging.getLogger(__name__)

NEGATIVE = 0
POSITIVE = 1
DEFAULT_REWARDS = {NEGATIVE: 0.0, POSITIVE: 1.0}


def one_hot(feedback, k=2):
    """Indicator encoding of feedback class indices (any shape) along a new last axis."""
    feedback = np.asarray(feedback, dtype=np.intp)
    if feedback.size and (feedback.min() < 0 or feedback.max() >= k):
        raise ContractError(f"feedback class outside 0..{k - 1}")
    return np.eye(k)[feedback]


def check_reward_map(reward_map, k=2):
    missing = [c for c in range(k) if c not in reward_map]
    if missing:
        raise ContractError(f"reward map has no value for feedback class(es) {missing}")
    return {int(c): float(reward_map[c]) for c in range(k)}


class ItemCatalog:
    """Item ids and their embeddings, one row per item."""

    def __init__(self, ids, embeddings):
        ids = [str(i) for i in ids]
        emb = np.array(embeddings, dtype=np.float64, copy=True)
        if emb.ndim != 2 or emb.shape[0] != len(ids):
            raise ContractError(
                f"embeddings must have shape ({len(ids)}, |E|), got {emb.shape}")
        if len(set(ids)) != len(ids):
            dup = [i for i, c in Counter(ids).items() if c > 1]
            raise DataError(f"duplicate item ids in catalog: {dup[:10]}")
        if emb.size and not (np.all(emb > -1.0) and np.all(emb < 1.0)):
            raise DataError("item embeddings must lie strictly inside (-1, 1)")
        self.ids = tuple(ids)
        self.embeddings = emb
        self.embeddings.setflags(write=False)
        self._index = {item: n for n, item in enumerate(self.ids)}

    @property
    def dim(self):
        return self.embeddings.shape[1]

    def __len__(self):
        return len(self.ids)

    def __contains__(self, item):
        return item in self._index

    def __eq__(self, other):
        return (isinstance(other, ItemCatalog) and self.ids == other.ids
                and np.array_equal(self.embeddings, other.embeddings))

    @functools.cached_property
    def lexical_rank(self):
        """Position of each item id in sorted id order (used for tie-breaks)."""
        rank = np.empty(len(self.ids), dtype=np.intp)
        rank[np.argsort(np.array(self.ids), kind="mergesort")] = np.arange(len(self.ids))
        return rank

    def index(self, item):
        try:
            return self._index[item]
        except KeyError:
            raise UnknownItemError(item) from None

    def indices(self, items):
        missing = [i for i in items if i not in self._index]
        if missing:
            raise UnknownItemError(missing)
        return np.array([self._index[i] for i in items], dtype=np.intp)

    def embedding(self, item):
        return self.embeddings[self.index(item)]

    def subset(self, keep):
        wanted = set(keep)
        keep = [i for i in self.ids if i in wanted]
        return ItemCatalog(keep, self.embeddings[[self._index[i] for i in keep]]
                           if keep else np.zeros((0, self.dim)))


@dataclass(frozen=True)
class Session:
    session_id: str
    items: tuple
    feedback: tuple

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(self.items))
        object.__setattr__(self, "feedback", tuple(int(f) for f in self.feedback))
        if len(self.items) != len(self.feedback):
            raise ContractError(f"session {self.session_id}: items and feedback differ in length")

    def __len__(self):
        return len(self.items)


@dataclass(frozen=True)
class State:
    """The N most recent (item, feedback) pairs, oldest first."""

    items: tuple
    feedback: tuple

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(self.items))
        object.__setattr__(self, "feedback", tuple(int(f) for f in self.feedback))
        if len(self.items) != len(self.feedback):
            raise ContractError("state items and feedback differ in length")
        if not self.items:
            raise ContractError("a state needs at least one item")

    def __len__(self):
        return len(self.items)

    @property
    def pairs(self):
        return list(zip(self.items, self.feedback))

    @classmethod
    def from_pairs(cls, pairs):
        pairs = list(pairs)
        return cls(tuple(p[0] for p in pairs), tuple(p[1] for p in pairs))


@dataclass(frozen=True)
class Transition:
    state: State
    action: str
    feedback: int
    reward: float
    session_id: str = ""
    position: int = 0


def next_state(s, action, feedback, catalog=None):
    """Drop the oldest pair and append ``(action, feedback)``; ``s`` is untouched."""
    if catalog is not None and action not in catalog:
        raise UnknownItemError(action, "next_state")
    return State(s.items[1:] + (action,), s.feedback[1:] + (int(feedback),))


def build_transitions(session, n, reward_map=None):
    """Sliding-window transitions of one session.

    The first ``n`` pairs form the initial state and item ``n + 1`` the first
    action; the window then advances one pair at a time, giving
    ``len(session) - n`` transitions (none if the session is too short).
    """
    if n < 1:
        raise ContractError(f"state length must be >= 1, got {n}")
    rewards = DEFAULT_REWARDS if reward_map is None else reward_map
    out = []
    for t in range(len(session) - n):
        state = State(session.items[t:t + n], session.feedback[t:t + n])
        f = session.feedback[t + n]
        out.append(Transition(state, session.items[t + n], f, float(rewards[f]),
                              session.session_id, t))
    return out


@dataclass
class TransitionSet:
    """Array-backed collection of transitions over one catalog.

    ``state_items`` holds catalog row indices, shape ``[T, N]``; ``actions``
    likewise indexes the catalog. Indexing with an int returns a
    :class:`Transition`; with an array, a new ``TransitionSet``.
    """

    catalog: ItemCatalog
    state_items: np.ndarray
    state_feedback: np.ndarray
    actions: np.ndarray
    feedback: np.ndarray
    sessions: np.ndarray
    positions: np.ndarray
    session_ids: tuple = ()
    reward_map: dict = field(default_factory=lambda: dict(DEFAULT_REWARDS))

    def __len__(self):
        return len(self.actions)

    @property
    def n(self):
        return self.state_items.shape[1]

    @property
    def rewards(self):
        lut = np.array([self.reward_map[c] for c in range(max(self.reward_map) + 1)])
        return lut[self.feedback]

    def subset(self, idx):
        idx = np.asarray(idx, dtype=np.intp)
        return TransitionSet(self.catalog, self.state_items[idx], self.state_feedback[idx],
                             self.actions[idx], self.feedback[idx], self.sessions[idx],
                             self.positions[idx], self.session_ids, self.reward_map)

    def __getitem__(self, i):
        if not isinstance(i, (int, np.integer)):
            return self.subset(i)
        ids = self.catalog.ids
        state = State(tuple(ids[j] for j in self.state_items[i]), tuple(self.state_feedback[i]))
        f = int(self.feedback[i])
        sid = self.session_ids[self.sessions[i]] if self.session_ids else str(self.sessions[i])
        return Transition(state, ids[self.actions[i]], f, float(self.reward_map[f]),
                          sid, int(self.positions[i]))

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def positive_ratio(self):
        return float(np.mean(self.feedback == POSITIVE)) if len(self) else 0.0

    def fingerprint(self):
        """Hashable digest of the contents, used to assert nothing was mutated."""
        import hashlib
        h = hashlib.sha256()
        for a in (self.state_items, self.state_feedback, self.actions, self.feedback,
                  self.sessions, self.positions):
            h.update(np.ascontiguousarray(a).tobytes())
        return h.hexdigest()

    def concat(self, other):
        return TransitionSet(
            self.catalog,
            np.concatenate([self.state_items, other.state_items]),
            np.concatenate([self.state_feedback, other.state_feedback]),
            np.concatenate([self.actions, other.actions]),
            np.concatenate([self.feedback, other.feedback]),
            np.concatenate([self.sessions, other.sessions]),
            np.concatenate([self.positions, other.positions]),
            self.session_ids, self.reward_map)


def _empty_set(catalog, n, session_ids=(), reward_map=None):
    z = np.zeros(0, dtype=np.intp)
    return TransitionSet(catalog, np.zeros((0, n), dtype=np.intp), np.zeros((0, n), dtype=np.intp),
                         z, z.copy(), z.copy(), z.copy(), tuple(session_ids),
                         dict(reward_map or DEFAULT_REWARDS))


def transitions_from_sessions(sessions, catalog, n, reward_map=None):
    """Vectorised equivalent of ``build_transitions`` over many sessions."""
    reward_map = dict(reward_map or DEFAULT_REWARDS)
    sessions = list(sessions)
    session_ids = tuple(s.session_id for s in sessions)
    rows = []
    for si, s in enumerate(sessions):
        if len(s) <= n:
            continue
        idx = catalog.indices(s.items)
        fb = np.asarray(s.feedback, dtype=np.intp)
        windows = np.lib.stride_tricks.sliding_window_view(idx, n)[:len(s) - n]
        fwin = np.lib.stride_tricks.sliding_window_view(fb, n)[:len(s) - n]
        count = len(s) - n
        rows.append((windows, fwin, idx[n:], fb[n:], np.full(count, si), np.arange(count)))
    if not rows:
        return _empty_set(catalog, n, session_ids, reward_map)
    cols = [np.concatenate([r[c] for r in rows]).astype(np.intp) for c in range(6)]
    return TransitionSet(catalog, *cols, session_ids=session_ids, reward_map=reward_map)


class Dataset:
    """Filtered sessions over a catalog, with their windowed transitions."""

    def __init__(self, catalog, sessions, n, reward_map=None, k=2, diagnostics=None):
        self.catalog = catalog
        self.k = k
        self.reward_map = check_reward_map(reward_map or DEFAULT_REWARDS, k)
        sessions = tuple(sessions)
        self.sessions = tuple(s for s in sessions if len(s) > n)
        self.n = n
        self.diagnostics = dict(diagnostics or {})
        dropped = len(sessions) - len(self.sessions)
        if dropped:
            self.diagnostics["short_sessions_dropped"] = (
                self.diagnostics.get("short_sessions_dropped", 0) + dropped)
        for s in self.sessions:
            catalog.indices(s.items)
        self.transitions = transitions_from_sessions(self.sessions, catalog, n, self.reward_map)

    def __len__(self):
        return len(self.transitions)

    def with_window(self, n):
        """Same sessions re-windowed with state length ``n``."""
        return Dataset(self.catalog, self.sessions, n, self.reward_map, self.k, self.diagnostics)

    def split(self):
        return split_train_test(self)


def split_train_test(dataset):
    """Each session's final transition goes to test, the rest to train."""
    ts = dataset.transitions if isinstance(dataset, Dataset) else dataset
    if len(ts) == 0:
        return ts.subset([]), ts.subset([])
    is_last = np.ones(len(ts), dtype=bool)
    is_last[:-1] = ts.sessions[:-1] != ts.sessions[1:]
    # Transitions are stored session-contiguously in positional order.
    return ts.subset(np.flatnonzero(~is_last)), ts.subset(np.flatnonzero(is_last))


def upsample_positive(train, target_ratio, seed=0):
    """Duplicate positive transitions until positives/total >= ``target_ratio``.

    Duplicates are drawn with replacement from the existing positives and
    appended after the originals, which stay untouched.
    """
    if not 0.0 <= target_ratio <= 1.0:
        raise ContractError(f"target_ratio must be in [0, 1], got {target_ratio}")
    total = len(train)
    pos_idx = np.flatnonzero(np.asarray(train.feedback) == POSITIVE)
    p = len(pos_idx)
    if target_ratio == 0.0 or (total and p / total >= target_ratio):
        return train
    if p == 0:
        raise UnsatisfiableError("cannot up-sample positives: there are none")
    if target_ratio == 1.0:
        if p == total:
            return train
        raise UnsatisfiableError("target ratio 1.0 is unreachable while negatives remain")
    # Smallest k with (p + k) / (total + k) >= target_ratio.
    k = int(np.ceil((target_ratio * total - p) / (1.0 - target_ratio) - 1e-9))
    while (p + k) < target_ratio * (total + k):
        k += 1
    while k > 0 and (p + k - 1) >= target_ratio * (total + k - 1):
        k -= 1
    rng = np.random.default_rng(seed)
    extra = rng.choice(pos_idx, size=k, replace=True)
    return train.concat(train.subset(extra))


# ---------------------------------------------------------------------------
# file formats

def read_embeddings(path):
    """Parse an embedding file: ``|E|=<int>`` header, then ``item v1 .. vE`` lines."""
    path = Path(path)
    ids, rows = [], []
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\n").rstrip("\r")
            if lineno == 1:
                if not line.startswith("|E|="):
                    raise ParseError("expected header '|E|=<int>'", lineno, path)
                try:
                    dim = int(line[4:])
                except ValueError:
                    raise ParseError(f"bad embedding dimension {line[4:]!r}", lineno, path) from None
                if dim < 1:
                    raise ParseError("embedding dimension must be positive", lineno, path)
                continue
            if not line.strip():
                continue
            parts = line.split(" ")
            if len(parts) != dim + 1:
                raise ParseError(f"expected item id and {dim} values, got {len(parts)} fields",
                                 lineno, path)
            try:
                rows.append([float(v) for v in parts[1:]])
            except ValueError as exc:
                raise ParseError(str(exc), lineno, path) from None
            ids.append(parts[0])
    if dim is None:
        raise ParseError("empty embedding file", 1, path)
    return ItemCatalog(ids, np.array(rows, dtype=np.float64).reshape(len(rows), dim))


def write_embeddings(path, catalog):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"|E|={catalog.dim}\n")
        for item, row in zip(catalog.ids, catalog.embeddings):
            fh.write(item + " " + " ".join(repr(float(v)) for v in row) + "\n")


def read_logs(path, k=2):
    """Parse ``session<TAB>item<TAB>feedback`` records into sessions.

    Records of one session must be contiguous and chronological.
    """
    path = Path(path)
    sessions = []
    seen = set()
    cur_id, items, fbs = None, [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3 or not parts[0] or not parts[1]:
                raise ParseError(f"expected 3 tab-separated fields, got {len(parts)}", lineno, path)
            sid, item, f = parts
            try:
                fi = int(f)
            except ValueError:
                raise ParseError(f"feedback class {f!r} is not an integer", lineno, path) from None
            if not 0 <= fi < k:
                raise ParseError(f"feedback class {fi} outside 0..{k - 1}", lineno, path)
            if sid != cur_id:
                if cur_id is not None:
                    sessions.append(Session(cur_id, items, fbs))
                if sid in seen:
                    raise ParseError(f"session {sid!r} is not contiguous", lineno, path)
                seen.add(sid)
                cur_id, items, fbs = sid, [], []
            items.append(item)
            fbs.append(fi)
    if cur_id is not None:
        sessions.append(Session(cur_id, items, fbs))
    return sessions


def write_logs(path, sessions):
    with open(path, "w", encoding="utf-8") as fh:
        for s in sessions:
            for item, f in zip(s.items, s.feedback):
                fh.write(f"{s.session_id}\t{item}\t{int(f)}\n")


def filter_sessions(sessions, catalog, min_count, n):
    """Remove rare items and short sessions until nothing changes.

    Iterating to a fixed point makes re-filtering a filtered corpus a no-op.
    Returns ``(catalog, sessions, diagnostics)``.
    """
    if min_count < 1:
        raise ContractError(f"min_count must be >= 1, got {min_count}")
    removed_items = set()
    dropped = 0
    while True:
        counts = Counter(item for s in sessions for item in s.items)
        rare = {item for item in catalog.ids if counts.get(item, 0) < min_count}
        rare -= removed_items
        kept = []
        for s in sessions:
            if rare & set(s.items):
                pairs = [(i, f) for i, f in zip(s.items, s.feedback) if i not in rare]
                s = Session(s.session_id, [p[0] for p in pairs], [p[1] for p in pairs])
            if len(s) >= n + 1:
                kept.append(s)
            else:
                dropped += 1
        removed_items |= rare
        changed = bool(rare) or len(kept) != len(sessions)
        sessions = kept
        if not changed:
            break
    used = {item for s in sessions for item in s.items}
    catalog = catalog.subset(used)
    diag = {"items_removed": len(removed_items), "short_sessions_dropped": dropped,
            "sessions_kept": len(sessions), "items_kept": len(catalog)}
    return catalog, sessions, diag


def ingest_logs(log_path, embedding_path, min_count=5, n=20, k=2, reward_map=None):
    """Read logs and embeddings, filter rare items and short sessions."""
    catalog = read_embeddings(embedding_path)
    sessions = read_logs(log_path, k)
    unknown = sorted({i for s in sessions for i in s.items if i not in catalog})
    if unknown:
        raise UnknownItemError(unknown, f"{log_path}")
    catalog, sessions, diag = filter_sessions(sessions, catalog, min_count, n)
    for key, value in diag.items():
        log.info("ingest %s: %s", key, value)
    if not sessions:
        warnings.warn("no session is long enough to form a transition after filtering; "
                      "the dataset is empty", RuntimeWarning, stacklevel=2)
    return Dataset(catalog, sessions, n, reward_map, k, diag)


def save_dataset(path, dataset):
    payload = {
        "format": "usersim-dataset",
        "version": 1,
        "n": dataset.n,
        "k": dataset.k,
        "reward_map": {str(c): v for c, v in dataset.reward_map.items()},
        "embedding_dim": dataset.catalog.dim,
        "items": list(dataset.catalog.ids),
        "embeddings": dataset.catalog.embeddings.tolist(),
        "sessions": [{"id": s.session_id, "items": list(s.items), "feedback": list(s.feedback)}
                     for s in dataset.sessions],
        "diagnostics": dataset.diagnostics,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load_dataset(path):
    try:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"not a dataset file: {exc}", exc.lineno, path) from None
    if payload.get("format") != "usersim-dataset":
        raise DataError(f"{path}: not a usersim dataset file")
    dim = payload["embedding_dim"]
    emb = np.array(payload["embeddings"], dtype=np.float64).reshape(len(payload["items"]), dim)
    catalog = ItemCatalog(payload["items"], emb)
    sessions = [Session(s["id"], s["items"], s["feedback"]) for s in payload["sessions"]]
    rewards = {int(c): float(v) for c, v in payload["reward_map"].items()}
    return Dataset(catalog, sessions, payload["n"], rewards, payload["k"],
                   payload.get("diagnostics"))
