"""
A synthetic world with a known user model
=========================================

Each session has a hidden preference vector. We draw logs from it, turn
them into (state, action, feedback) transitions and check how well the
true click probability ranks the held-out feedback.
"""

import numpy as np

from usersim.data import Dataset, split_train_test
from usersim.metrics import auc
from usersim.synth import SynthConfig, synth_world

world = synth_world(SynthConfig(n_sessions=300, session_length=30), seed=0)
print("catalog:", len(world.catalog), "items of dimension", world.catalog.dim)
print("first session:", world.sessions[0].items[:6], world.sessions[0].feedback[:6])

ds = Dataset(world.catalog, world.sessions, n=5)
train, test = split_train_test(ds)
print("train / test transitions:", len(train), len(test))
print("positive rate in train:", round(train.positive_ratio(), 3))

# the planted probability is the best any simulator could do
truth = world.transition_scores(test)
print("AUC of the planted probability:", round(auc(truth, test.feedback == 1), 4))

# a sharper logging policy shows fewer negatives
sharp = synth_world(SynthConfig(n_sessions=300, session_length=30, temperature=3.0), seed=0)
rate = np.mean([np.mean(s.feedback) for s in sharp.sessions])
print("positive rate with temperature 3:", round(rate, 3))
