"""Reset/step facade over a frozen discriminator.

The handle holds a private, read-only copy of the discriminator parameters,
so stepping never changes it and one handle can serve many episodes at once.
Sample-mode draws come from a generator seeded by
``(base seed, episode seed, step)``, which makes every episode reproducible
regardless of how episodes are interleaved.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np

from .data import DEFAULT_REWARDS, State, check_reward_map, next_state
from .discriminator import class_probs, predict_from_probs
from .errors import ContractError, UnknownItemError

MODES = ("argmax", "sample")


def _freeze(disc):
    disc = copy.deepcopy(disc)
    for _, t in disc.store.items():
        t.data.setflags(write=False)
    return disc


@dataclass(frozen=True)
class SimulatorHandle:
    discriminator: object
    catalog: object
    reward_map: dict
    n: int
    mode: str = "argmax"
    seed: int = 0
    start_states: tuple = ()
    popularity: tuple = ()

    def __post_init__(self):
        if self.mode not in MODES:
            raise ContractError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.n < 1:
            raise ContractError(f"N must be >= 1, got {self.n}")
        if self.catalog.dim != self.discriminator.embedding_dim:
            raise ContractError(f"catalog |E|={self.catalog.dim} does not match the "
                                f"discriminator's {self.discriminator.embedding_dim}")
        object.__setattr__(self, "discriminator", _freeze(self.discriminator))
        rewards = dict(self.reward_map)
        check_reward_map(rewards, self.discriminator.k)
        object.__setattr__(self, "reward_map", rewards)
        object.__setattr__(self, "start_states", tuple(self.start_states))
        object.__setattr__(self, "popularity", tuple(int(c) for c in self.popularity))
        for s in self.start_states:
            _check_state(self, s)

    @property
    def k(self):
        return self.discriminator.k

    def feedback_distribution(self, state, action):
        """Real-block probabilities indexed by feedback class, renormalised to sum 1."""
        if action not in self.catalog:
            raise UnknownItemError(action, "step")
        logits = self.discriminator.classify(state, self.catalog.embedding(action), self.catalog)
        _, _, by_class = predict_from_probs(class_probs(logits).data[None], self.k)
        return by_class[0]


def make_handle(discriminator, catalog, n, reward_map=None, mode="argmax", seed=0,
                start_states=(), popularity=()):
    return SimulatorHandle(discriminator, catalog,
                           DEFAULT_REWARDS if reward_map is None else reward_map,
                           n, mode, seed, start_states, popularity)


@dataclass(frozen=True)
class EnvState:
    state: State
    step: int = 0
    episode_seed: int = 0


def _check_state(handle, state):
    if not isinstance(state, State):
        raise ContractError(f"expected a State, got {type(state).__name__}")
    if len(state) != handle.n:
        raise ContractError(f"state has length {len(state)}, the simulator uses N={handle.n}")
    missing = [i for i in state.items if i not in handle.catalog]
    if missing:
        raise ContractError(f"state refers to unknown items {missing[:5]}")
    if any(f < 0 or f >= handle.k for f in state.feedback):
        raise ContractError(f"state feedback outside 0..{handle.k - 1}")


def reset(handle, state=None, seed=0):
    """Start an episode from ``state`` or from a test start state drawn under ``seed``."""
    if state is None:
        if not handle.start_states:
            raise ContractError("the handle has no start states; pass an explicit state")
        rng = np.random.default_rng([handle.seed, seed, 0])
        state = handle.start_states[int(rng.integers(len(handle.start_states)))]
    else:
        _check_state(handle, state)
    return EnvState(state, 0, seed)


def _draw(handle, env, probs):
    if handle.mode == "argmax":
        # first maximum in slot order, i.e. the most positive class on ties
        return handle.k - 1 - int(np.argmax(probs[::-1]))
    rng = np.random.default_rng([handle.seed, env.episode_seed, env.step + 1])
    u = rng.random()
    return int(min(np.searchsorted(np.cumsum(probs), u, side="right"), handle.k - 1))


def step(handle, env, action):
    """``(feedback, reward, next_env)``; ``env`` itself is left as it was."""
    probs = handle.feedback_distribution(env.state, action)
    feedback = _draw(handle, env, probs)
    reward = handle.reward_map[feedback]
    nxt = EnvState(next_state(env.state, action, feedback), env.step + 1, env.episode_seed)
    return feedback, reward, nxt


@dataclass(frozen=True)
class StepRecord:
    state: State
    action: str
    feedback: int
    reward: float


@dataclass(frozen=True)
class Trajectory:
    steps: tuple
    total_reward: float
    final: EnvState

    def __len__(self):
        return len(self.steps)


def rollout(handle, policy, horizon, seed=0, state=None):
    """Run ``policy`` for ``horizon`` steps from a reset state."""
    if horizon < 1:
        raise ContractError(f"horizon must be >= 1, got {horizon}")
    env = reset(handle, state, seed)
    records = []
    total = 0.0
    for t in range(horizon):
        action = policy(env.state)
        try:
            feedback, reward, nxt = step(handle, env, action)
        except UnknownItemError as exc:
            raise UnknownItemError(exc.items, f"policy action at step {t}") from exc
        records.append(StepRecord(env.state, action, feedback, reward))
        total += reward
        env = nxt
    return Trajectory(tuple(records), total, env)


def random_policy(catalog, seed=0):
    """Uniformly random items from a private stream seeded by ``seed``."""
    rng = np.random.default_rng(seed)
    ids = catalog.ids

    def policy(state):
        return ids[int(rng.integers(len(ids)))]

    return policy


def popular_policy(catalog, counts):
    """Most frequent item not already in the state; ties go to the smaller id."""
    counts = np.asarray(counts, dtype=np.float64)
    if counts.shape != (len(catalog),):
        raise ContractError(f"need one count per catalog item, got {counts.shape}")
    order = [catalog.ids[i] for i in np.lexsort((catalog.lexical_rank, -counts))]

    def policy(state):
        seen = set(state.items)
        for item in order:
            if item not in seen:
                return item
        return order[0]

    return policy


def constant_policy(item):
    return lambda state: item


def handle_from_checkpoint(ckpt, mode="argmax", seed=0):
    """Build a handle from a loaded :class:`~usersim.checkpoint.Checkpoint`."""
    catalog = ckpt.catalog
    if catalog is None:
        raise ContractError("the checkpoint carries no item catalog")
    starts = ()
    items = ckpt.extras.get("start_items")
    if items is not None and items.size:
        fb = ckpt.extras["start_feedback"].astype(np.intp)
        ids = catalog.ids
        starts = tuple(State(tuple(ids[int(i)] for i in row), tuple(f))
                       for row, f in zip(items.astype(np.intp), fb))
    popularity = ckpt.extras.get("popularity", np.zeros(len(catalog)))
    return make_handle(ckpt.discriminator, catalog, ckpt.config.n, ckpt.config.reward_map(),
                       mode, seed, starts, popularity)
