"""
Using a trained simulator as an environment
===========================================

Saves a small simulator to a checkpoint, loads it back and rolls out two
policies in both feedback modes.
"""

import tempfile
from pathlib import Path

from usersim.checkpoint import load_checkpoint, save_simulator
from usersim.data import Dataset
from usersim.env import handle_from_checkpoint, popular_policy, random_policy, rollout
from usersim.synth import SynthConfig, synth_world
from usersim.training import TrainConfig, train_simulator

world = synth_world(SynthConfig(n_items=100, n_sessions=200, session_length=20), seed=2)
ds = Dataset(world.catalog, world.sessions, n=5)
config = TrainConfig(n=5, hidden=16, action_dim=8, head_hidden=16, rounds=3,
                     gen_pretrain_epochs=1, disc_pretrain_epochs=2)
result = train_simulator(ds, config)

with tempfile.TemporaryDirectory() as tmp:
    path = save_simulator(Path(tmp) / "sim.ckpt", result, ds)
    ckpt = load_checkpoint(path)

for mode in ("argmax", "sample"):
    handle = handle_from_checkpoint(ckpt, mode=mode, seed=0)
    policies = {"random": random_policy(handle.catalog, seed=0),
                "popular": popular_policy(handle.catalog, handle.popularity)}
    for name, policy in policies.items():
        totals = [rollout(handle, policy, horizon=20, seed=ep).total_reward for ep in range(20)]
        print(f"{mode:6s} {name:7s} mean return over 20 episodes: {sum(totals) / 20:.2f}")

traj = rollout(handle_from_checkpoint(ckpt), random_policy(ckpt.catalog, 1), 3, seed=4)
for rec in traj.steps:
    print(rec.state.items, "->", rec.action, "feedback", rec.feedback)
