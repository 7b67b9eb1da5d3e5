"""Pre-training and alternating adversarial training of the simulator.

The pipeline run by :func:`train_simulator`:

1. pre-train the generator on the supervised imitation loss;
2. pre-train the discriminator on the supervised feedback loss, with fakes
   from the frozen generator;
3. alternate ``d_steps`` discriminator updates and ``g_steps`` generator
   updates for ``rounds`` rounds (optionally stopping early once validation
   AUC stops improving).
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field, fields

import numpy as np

from .config import format_key_values, parse_key_values
from .data import Dataset, split_train_test, upsample_positive
from .discriminator import Discriminator, disc_loss, disc_sup_loss
from .encoder import make_batch
from .errors import ConfigError, ContractError, NumericError, ShapeError, UnsatisfiableError
from .generator import Generator, gen_loss, gen_sup_loss
from .metrics import auc
from .nn import adam_step, backward

log = logging.getLogger(__name__)

VARIANTS = ("full", "v1", "v2", "v3")
VARIANT_ALIASES = {"v1-threeclass": "v1", "v2-beta0": "v2", "v3-nogan": "v3"}


@dataclass
class TrainConfig:
    n: int = 20
    k: int = 2
    embedding_dim: int = 20
    feedback_dim: int = 10
    hidden: int = 128
    action_dim: int = 32
    head_hidden: int = 128
    lr: float = 0.001
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 500
    alpha: float = 1.0
    beta: float = 1.0
    lam: float = 0.3
    d_steps: int = 1
    g_steps: int = 1
    gen_pretrain_epochs: int = 5
    disc_pretrain_epochs: int = 5
    rounds: int = 50
    seed: int = 0
    variant: str = "full"
    upsample_ratio: float = 0.5
    val_fraction: float = 0.05
    early_stop: bool = False
    early_stop_patience: int = 5
    early_stop_min_delta: float = 0.001
    rewards: str = "0.0,1.0"

    def validate(self):
        positive = ("n", "k", "embedding_dim", "feedback_dim", "hidden", "action_dim",
                    "head_hidden", "batch_size", "early_stop_patience")
        for name in positive:
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        non_negative = ("alpha", "beta", "lam", "d_steps", "g_steps", "gen_pretrain_epochs",
                        "disc_pretrain_epochs", "rounds", "early_stop_min_delta")
        for name in non_negative:
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if not 0 <= self.upsample_ratio < 1:
            raise ConfigError("upsample_ratio must be in [0, 1)")
        if not 0 <= self.val_fraction < 1:
            raise ConfigError("val_fraction must be in [0, 1)")
        if VARIANT_ALIASES.get(self.variant, self.variant) not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        self.reward_map()
        return self

    def reward_map(self):
        try:
            values = [float(v) for v in self.rewards.split(",")]
        except ValueError:
            raise ConfigError(f"rewards: cannot parse {self.rewards!r}") from None
        if len(values) != self.k:
            raise ConfigError(f"rewards needs {self.k} comma-separated values, got {len(values)}")
        return dict(enumerate(values))

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        return dataclasses.asdict(self)

    def to_text(self):
        return format_key_values(self.to_dict())

    @classmethod
    def from_text(cls, text):
        return cls(**parse_key_values(text, {f.name: f.type for f in fields(cls)}, cls)).validate()

    @classmethod
    def from_file(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read())

    @classmethod
    def from_dict(cls, values):
        names = {f.name for f in fields(cls)}
        unknown = set(values) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**values).validate()


def apply_variant(config):
    """Effective config for the configured ablation variant.

    ``full`` is unchanged; ``v1`` uses a ``K + 1`` output head; ``v2`` sets
    ``beta = 0``; ``v3`` keeps only the two supervised pre-training phases.
    """
    cfg = config.validate()
    variant = VARIANT_ALIASES.get(cfg.variant, cfg.variant)
    if variant == "full":
        return cfg.replace(variant="full")
    if variant == "v1":
        return cfg.replace(variant="v1")
    if variant == "v2":
        return cfg.replace(variant="v2", beta=0.0)
    return cfg.replace(variant="v3", rounds=0, early_stop=False)


def uses_three_class_head(config):
    return VARIANT_ALIASES.get(config.variant, config.variant) == "v1"


def build_models(config, rng=None):
    """Freshly initialised (generator, discriminator) for ``config``."""
    seeds = np.random.SeedSequence(config.seed).spawn(2) if rng is None else rng.spawn(2)
    gen = Generator(config.embedding_dim, config.feedback_dim, config.hidden, config.k,
                    np.random.default_rng(seeds[0]))
    disc = Discriminator(config.embedding_dim, config.feedback_dim, config.hidden, config.k,
                         np.random.default_rng(seeds[1]), config.action_dim,
                         config.head_hidden, uses_three_class_head(config))
    return gen, disc


@dataclass
class LossCurve:
    epoch_means: list = field(default_factory=list)
    step_losses: list = field(default_factory=list)
    real_counts: list = field(default_factory=list)
    fake_counts: list = field(default_factory=list)


@dataclass
class RoundRecord:
    round: int
    d_losses: list
    g_losses: list
    val_auc: float | None
    real_counts: list
    fake_counts: list

    @property
    def d_loss(self):
        return float(np.mean([d["total"] for d in self.d_losses])) if self.d_losses else math.nan

    @property
    def g_loss(self):
        return float(np.mean([g["total"] for g in self.g_losses])) if self.g_losses else math.nan

    def to_dict(self):
        return {"round": self.round, "d_loss": self.d_loss, "g_loss": self.g_loss,
                "val_auc": self.val_auc, "d_steps": self.d_losses, "g_steps": self.g_losses,
                "real_counts": self.real_counts, "fake_counts": self.fake_counts}


@dataclass
class TrainResult:
    generator: Generator
    discriminator: Discriminator
    config: TrainConfig
    gen_curve: LossCurve
    disc_curve: LossCurve
    trace: list
    stopped_early: bool = False
    test: object = None

    def trace_dicts(self):
        return [r.to_dict() for r in self.trace]


def _adam(store, config):
    adam_step(store, config.lr, config.adam_beta1, config.adam_beta2, config.adam_eps)


def _check_finite(value, what):
    if not math.isfinite(value):
        raise NumericError(f"{what} became non-finite ({value})")


def _batches(n, batch_size, rng):
    perm = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield perm[start:start + batch_size]


def _sample(n, batch_size, rng):
    if n <= batch_size:
        return rng.permutation(n)
    return rng.choice(n, size=batch_size, replace=False)


def pretrain_generator(train, config, generator=None, rng=None, max_steps=None):
    """Minimise the supervised imitation loss with seeded minibatch Adam.

    Returns ``(generator, curve)``; ``curve.epoch_means`` holds one mean loss
    per epoch and ``curve.step_losses`` every step's loss.
    """
    if len(train) == 0:
        raise ContractError("generator pre-training needs a non-empty training split")
    rng = np.random.default_rng(config.seed if rng is None else rng)
    if generator is None:
        generator, _ = build_models(config)
    curve = LossCurve()
    steps = 0
    for epoch in range(config.gen_pretrain_epochs):
        losses = []
        for idx in _batches(len(train), config.batch_size, rng):
            if max_steps is not None and steps >= max_steps:
                break
            batch = make_batch(train, idx, config.k)
            loss = gen_sup_loss(generator, batch)
            _check_finite(loss.item(), f"generator pre-training loss (epoch {epoch}, step {steps})")
            backward(loss)
            _adam(generator.store, config)
            losses.append(loss.item())
            steps += 1
        if losses:
            curve.epoch_means.append(float(np.mean(losses)))
            curve.step_losses.extend(losses)
    return generator, curve


def pretrain_discriminator(train, generator, config, discriminator=None, rng=None,
                           max_steps=None):
    """Minimise the supervised discriminator loss against the frozen generator.

    Every batch pairs each real transition with one generated action for the
    same state, so real and fake counts always match.
    """
    if len(train) == 0:
        raise ContractError("discriminator pre-training needs a non-empty training split")
    rng = np.random.default_rng(config.seed if rng is None else rng)
    if discriminator is None:
        _, discriminator = build_models(config)
    curve = LossCurve()
    steps = 0
    for epoch in range(config.disc_pretrain_epochs):
        losses = []
        for idx in _batches(len(train), config.batch_size, rng):
            if max_steps is not None and steps >= max_steps:
                break
            batch = make_batch(train, idx, config.k)
            fakes = generator.generate(batch.state_emb, batch.state_onehot)
            loss = disc_sup_loss(discriminator, batch, fakes, config.lam)
            _check_finite(loss.item(),
                          f"discriminator pre-training loss (epoch {epoch}, step {steps})")
            backward(loss)
            _adam(discriminator.store, config)
            losses.append(loss.item())
            curve.real_counts.append(len(batch))
            curve.fake_counts.append(len(fakes))
            steps += 1
        if losses:
            curve.epoch_means.append(float(np.mean(losses)))
            curve.step_losses.extend(losses)
    return discriminator, curve


def discriminator_step(generator, discriminator, batch, config):
    """One Adam update of the discriminator on the full loss; returns loss parts."""
    fakes = generator.generate(batch.state_emb, batch.state_onehot)
    parts = {}
    loss = disc_loss(discriminator, batch, fakes, config.alpha, config.lam, parts)
    _check_finite(parts["total"], "discriminator loss")
    backward(loss)
    _adam(discriminator.store, config)
    parts["n_real"] = len(batch)
    parts["n_fake"] = int(fakes.shape[0])
    return parts


def generator_step(generator, discriminator, batch, config):
    """One Adam update of the generator with the discriminator held fixed."""
    parts = {}
    loss = gen_loss(generator, discriminator, batch, config.beta, parts)
    _check_finite(parts["total"], "generator loss")
    backward(loss)
    _adam(generator.store, config)
    return parts


def validation_auc(discriminator, val, k=2):
    if val is None or len(val) == 0:
        return None
    labels = np.asarray(val.feedback) == k - 1
    if labels.all() or not labels.any():
        return None
    _, scores, _ = discriminator.predict_batch(make_batch(val, None, k))
    return auc(scores, labels)


def adversarial_train(train, generator, discriminator, config, disc_train=None, val=None,
                      rng=None):
    """Alternate discriminator and generator updates for ``config.rounds`` rounds.

    ``disc_train`` (default ``train``) is the stream discriminator batches are
    drawn from, typically the positive-up-sampled training split. Returns
    ``(trace, stopped_early)``.
    """
    rng = np.random.default_rng(config.seed if rng is None else rng)
    disc_train = train if disc_train is None else disc_train
    trace = []
    best, since_best = -math.inf, 0
    for r in range(config.rounds):
        d_parts, g_parts, reals, fakes = [], [], [], []
        try:
            for s in range(config.d_steps):
                batch = make_batch(disc_train, _sample(len(disc_train), config.batch_size, rng),
                                   config.k)
                p = discriminator_step(generator, discriminator, batch, config)
                reals.append(p.pop("n_real"))
                fakes.append(p.pop("n_fake"))
                d_parts.append(p)
            for s in range(config.g_steps):
                batch = make_batch(train, _sample(len(train), config.batch_size, rng), config.k)
                g_parts.append(generator_step(generator, discriminator, batch, config))
        except NumericError as exc:
            phase = "generator" if len(d_parts) == config.d_steps else "discriminator"
            raise NumericError(f"training diverged in round {r}, {phase} step {s}: {exc}") from exc
        score = validation_auc(discriminator, val, config.k)
        trace.append(RoundRecord(r, d_parts, g_parts, score, reals, fakes))
        log.debug("round %d: L_D=%.4f L_G=%.4f val_auc=%s", r, trace[-1].d_loss,
                  trace[-1].g_loss, score)
        if config.early_stop and score is not None:
            if score > best + config.early_stop_min_delta:
                best, since_best = score, 0
            else:
                since_best += 1
                if since_best >= config.early_stop_patience:
                    return trace, True
    return trace, False


def holdout(train, fraction, rng):
    """Split off a seeded random ``fraction`` of transitions for validation."""
    n_val = int(round(len(train) * fraction))
    if n_val == 0 or n_val >= len(train):
        return train, None
    perm = rng.permutation(len(train))
    return train.subset(np.sort(perm[n_val:])), train.subset(np.sort(perm[:n_val]))


def prepare_dataset(dataset, config):
    if dataset.catalog.dim != config.embedding_dim:
        raise ShapeError(f"catalog embeddings have |E|={dataset.catalog.dim}, "
                         f"config says embedding_dim={config.embedding_dim}")
    if dataset.k != config.k:
        raise ConfigError(f"dataset has K={dataset.k}, config says k={config.k}")
    if dataset.n != config.n:
        dataset = dataset.with_window(config.n)
    return dataset


def train_simulator(dataset: Dataset, config: TrainConfig):
    """Run the whole pipeline on ``dataset``'s training split.

    Deterministic for a given (dataset, config): every random draw comes from
    streams spawned off ``config.seed``.
    """
    cfg = apply_variant(config)
    dataset = prepare_dataset(dataset, cfg)
    train, test = split_train_test(dataset)
    if len(train) == 0:
        raise ContractError("the training split is empty")
    seq = np.random.SeedSequence(cfg.seed)
    s_models, s_val, s_up, s_gen, s_disc, s_adv = seq.spawn(6)
    gen, disc = build_models(cfg, s_models)
    fit, val = holdout(train, cfg.val_fraction, np.random.default_rng(s_val))
    try:
        up_seed = int(np.random.default_rng(s_up).integers(2**63))
        disc_train = upsample_positive(fit, cfg.upsample_ratio, up_seed)
    except UnsatisfiableError:
        log.warning("no positive transitions to up-sample; using the raw training split")
        disc_train = fit
    gen, gen_curve = pretrain_generator(fit, cfg, gen, np.random.default_rng(s_gen))
    disc, disc_curve = pretrain_discriminator(disc_train, gen, cfg, disc,
                                              np.random.default_rng(s_disc))
    trace, stopped = adversarial_train(fit, gen, disc, cfg, disc_train, val,
                                       np.random.default_rng(s_adv))
    return TrainResult(gen, disc, cfg, gen_curve, disc_curve, trace, stopped, test)
