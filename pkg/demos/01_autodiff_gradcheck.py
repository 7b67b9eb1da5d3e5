"""
Reverse-mode gradients and a finite-difference check
====================================================

Builds a tiny generator and discriminator, computes the adversarial losses
on a random batch, and compares backprop against central differences.
"""

import numpy as np

from usersim.discriminator import Discriminator, disc_loss
from usersim.encoder import Batch
from usersim.generator import Generator, gen_loss
from usersim.data import one_hot
from usersim.nn import grad_check

rng = np.random.default_rng(0)
n, e, f, h = 4, 6, 4, 8

# a batch of 5 states of length 4, plus logged actions and feedback
batch = Batch(rng.uniform(-0.9, 0.9, (5, n, e)), one_hot(rng.integers(2, size=(5, n))),
              rng.uniform(-0.9, 0.9, (5, e)), rng.integers(2, size=5))

gen = Generator(e, f, h, rng=1)
disc = Discriminator(e, f, h, rng=2, action_dim=8, head_hidden=8)

# generator objective: the discriminator is a constant here
err = grad_check(lambda: gen_loss(gen, disc, batch, beta=1.0), gen.store)
print(f"generator loss, worst relative error: {err:.2e}")

# discriminator objective: fakes are detached generator outputs
fakes = gen.generate(batch.state_emb, batch.state_onehot)
err = grad_check(lambda: disc_loss(disc, batch, fakes, alpha=1.0, lam=0.3), disc.store)
print(f"discriminator loss, worst relative error: {err:.2e}")
