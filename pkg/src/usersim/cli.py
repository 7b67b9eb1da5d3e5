"""Command-line driver for every pipeline stage.

Exit codes: 0 success, 2 config/contract error, 3 data error, 4 numeric
divergence.
"""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import checkpoint as ckpt_io
from .data import ingest_logs, load_dataset, save_dataset, split_train_test, write_embeddings, \
    write_logs
from .env import handle_from_checkpoint, popular_policy, random_policy, rollout
from .errors import UserSimError
from .evaluation import eval_discriminator, eval_generator, parse_sweep_values, sweep, \
    write_report
from .synth import SynthConfig, synth_world
from .training import TrainConfig, train_simulator

log = logging.getLogger("usersim")


def _train_config(args, **overrides):
    cfg = TrainConfig.from_file(args.config) if args.config else TrainConfig()
    changes = {"seed": args.seed} if getattr(args, "seed", None) is not None else {}
    changes.update(overrides)
    return cfg.replace(**changes).validate()


def cmd_synth(args):
    cfg = SynthConfig.from_file(args.config) if args.config else SynthConfig()
    world = synth_world(cfg, args.seed)
    write_logs(args.out_logs, world.sessions)
    write_embeddings(args.out_embeddings, world.catalog)
    print(f"wrote {len(world.sessions)} sessions to {args.out_logs} and "
          f"{len(world.catalog)} embeddings to {args.out_embeddings}")


def cmd_ingest(args):
    ds = ingest_logs(args.logs, args.embeddings, args.min_count, args.n)
    save_dataset(args.out, ds)
    print(f"dataset: {len(ds.sessions)} sessions, {len(ds.catalog)} items, "
          f"{len(ds)} transitions at N={ds.n} -> {args.out}")


def _train(args, variant=None, rounds=None):
    overrides = {}
    if variant is not None:
        overrides["variant"] = variant
    if rounds is not None:
        overrides["rounds"] = rounds
    cfg = _train_config(args, **overrides)
    dataset = load_dataset(args.dataset)
    result = train_simulator(dataset, cfg)
    ckpt_io.save_simulator(args.out, result, dataset)
    last = result.trace[-1].val_auc if result.trace else None
    print(f"trained {len(result.trace)} adversarial rounds (variant {result.config.variant}); "
          f"last validation AUC {last}; checkpoint {args.out}")


def cmd_pretrain(args):
    _train(args, rounds=0)


def cmd_train(args):
    _train(args, variant=args.variant)


def _eval_inputs(args):
    ck = ckpt_io.load_checkpoint(args.ckpt)
    dataset = load_dataset(args.dataset)
    if dataset.catalog.dim != ck.config.embedding_dim:
        raise ckpt_io.DimensionError(
            f"dataset has |E|={dataset.catalog.dim}, checkpoint expects {ck.config.embedding_dim}")
    _, test = split_train_test(dataset.with_window(ck.config.n))
    return ck, test


def cmd_eval_disc(args):
    ck, test = _eval_inputs(args)
    metrics = eval_discriminator(test, ck.discriminator)
    write_report(args.report, "eval-disc", metrics, ck.config)
    print(f"F1 {metrics['f1']:.4f}  AUC {metrics['auc']}")


def cmd_eval_gen(args):
    ck, test = _eval_inputs(args)
    metrics = eval_generator(test, ck.generator, k=args.k, relevance=args.relevance)
    write_report(args.report, "eval-gen", metrics, ck.config)
    print(f"MAP {metrics['map']:.4f}  NDCG@{args.k} {metrics[f'ndcg@{args.k}']:.4f}")


def cmd_sweep(args):
    values = parse_sweep_values(args.param, args.values)
    cfg = _train_config(args)
    dataset = load_dataset(args.dataset)
    rows, notes = sweep(dataset, cfg, args.param, values)
    write_report(args.report, f"sweep-{args.param}", {"results": rows}, cfg, notes=notes)
    for row in rows:
        print(f"{args.param}={row['value']}: AUC {row['auc']}  F1 {row['f1']:.4f}")


def cmd_simulate(args):
    ck = ckpt_io.load_checkpoint(args.ckpt)
    handle = handle_from_checkpoint(ck, args.mode, args.seed)
    episodes = []
    for ep in range(args.episodes):
        if args.policy == "random":
            policy = random_policy(handle.catalog, [args.seed, ep])
        else:
            policy = popular_policy(handle.catalog, handle.popularity)
        traj = rollout(handle, policy, args.horizon, seed=ep)
        episodes.append({
            "episode": ep,
            "total_reward": traj.total_reward,
            "steps": [{"action": s.action, "feedback": s.feedback, "reward": s.reward}
                      for s in traj.steps],
        })
    totals = np.array([e["total_reward"] for e in episodes])
    metrics = {"episodes": args.episodes, "horizon": args.horizon, "mode": args.mode,
               "policy": args.policy, "mean_return": float(totals.mean()),
               "std_return": float(totals.std())}
    write_report(args.report, "simulate", metrics, ck.config, trace=episodes,
                 notes=["episodes end only at the configured horizon"])
    print(f"{args.episodes} episodes: mean return {metrics['mean_return']:.4f}")


def build_parser():
    p = argparse.ArgumentParser(prog="usersim", description="Learned user-feedback simulator.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a planted synthetic corpus")
    s.add_argument("--config")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out-logs", required=True)
    s.add_argument("--out-embeddings", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("ingest", help="filter logs and embeddings into a dataset file")
    s.add_argument("--logs", required=True)
    s.add_argument("--embeddings", required=True)
    s.add_argument("--min-count", type=int, default=5)
    s.add_argument("--n", type=int, default=20, help="state length N (default 20)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_ingest)

    for name, func, helptext in (("pretrain", cmd_pretrain, "pre-training only"),
                                 ("train", cmd_train, "full training pipeline")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--dataset", required=True)
        s.add_argument("--config")
        s.add_argument("--seed", type=int)
        if name == "train":
            s.add_argument("--variant", default="full",
                           choices=["full", "v1", "v2", "v3",
                                    "v1-threeclass", "v2-beta0", "v3-nogan"])
        s.add_argument("--out", required=True)
        s.set_defaults(func=func)

    s = sub.add_parser("eval-disc", help="F1/AUC of the feedback predictor on the test split")
    s.add_argument("--dataset", required=True)
    s.add_argument("--ckpt", required=True)
    s.add_argument("--report", required=True)
    s.set_defaults(func=cmd_eval_disc)

    s = sub.add_parser("eval-gen", help="MAP/NDCG@k of the generator on the test split")
    s.add_argument("--dataset", required=True)
    s.add_argument("--ckpt", required=True)
    s.add_argument("--k", type=int, default=40)
    s.add_argument("--relevance", choices=["binary", "feedback"], default="binary")
    s.add_argument("--report", required=True)
    s.set_defaults(func=cmd_eval_gen)

    s = sub.add_parser("sweep", help="train once per parameter value")
    s.add_argument("--dataset", required=True)
    s.add_argument("--config")
    s.add_argument("--param", required=True, choices=["N", "lambda"])
    s.add_argument("--values", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--report", required=True)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("simulate", help="roll out a policy against a trained simulator")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--mode", choices=["argmax", "sample"], default="argmax")
    s.add_argument("--episodes", type=int, default=10)
    s.add_argument("--horizon", type=int, default=20)
    s.add_argument("--policy", choices=["random", "popular"], default="random")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--report", required=True)
    s.set_defaults(func=cmd_simulate)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except UserSimError as exc:
        print(f"usersim {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"usersim {args.command}: error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
