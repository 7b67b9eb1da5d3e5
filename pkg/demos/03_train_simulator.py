"""
Training a simulator end to end
===============================

Pre-trains both networks, runs a few adversarial rounds and evaluates the
discriminator's feedback prediction and the generator's next-item ranking.
A reduced world keeps this under a minute.
"""

from usersim.data import Dataset
from usersim.evaluation import baseline_random, eval_discriminator, eval_generator
from usersim.synth import SynthConfig, synth_world
from usersim.training import TrainConfig, build_models, train_simulator

world = synth_world(SynthConfig(n_items=200, n_sessions=400, session_length=30), seed=1)
ds = Dataset(world.catalog, world.sessions, n=5)

config = TrainConfig(n=5, hidden=32, action_dim=16, head_hidden=32, rounds=10,
                     gen_pretrain_epochs=3, disc_pretrain_epochs=3)
result = train_simulator(ds, config)

for r in result.trace[::3]:
    print(f"round {r.round:2d}  L_D {r.d_loss:.4f}  L_G {r.g_loss:.4f}  val AUC {r.val_auc:.3f}")

untrained_gen, untrained_disc = build_models(config)
print("discriminator:", eval_discriminator(result.test, result.discriminator))
print("untrained:    ", eval_discriminator(result.test, untrained_disc))
print("random:       ", baseline_random(result.test, seed=0))

print("generator NDCG@40:", round(eval_generator(result.test, result.generator)["ndcg@40"], 4),
      "vs untrained", round(eval_generator(result.test, untrained_gen)["ndcg@40"], 4))
