"""Sampling connectivity from Bernoulli probabilities and nudging them with returns.

Every genome is a pure function of (generation seed, index), so the update can
re-draw the population instead of keeping it in memory.
"""

import numpy as np

from evoconn import BitMatrix, Genome, NetworkConfig, ec_step, ec_update, extract, init_model, sample_genome
from evoconn.probability import ProbabilityModel

# two genomes, one probability, hand-checkable
EMPTY = np.zeros((0, 0))


def one_bit(b):
    return Genome(BitMatrix.zeros(0, 0), BitMatrix.from_dense(np.array([[b]], dtype=bool)), BitMatrix.zeros(0, 0))


model = ProbabilityModel(EMPTY, np.array([[0.5]], dtype=np.float32), EMPTY)
after = ec_step(model, [one_bit(True), one_bit(False)], [1.0, 0.0], 0.15)
print(f"rho = 0.5, returns (1, 0) for theta = (1, 0): rho' = {float(after.p_rec[0, 0])}")

# a whole network: sampling is reproducible and the update moves rho towards good bits
net = NetworkConfig(n_neurons=32, obs_dim=3, act_dim=1)
model = init_model(net)
gen_seed = 1234
a = sample_genome(model, gen_seed, 7)
b = sample_genome(model, gen_seed, 7)
print("same (seed, index) gives the same genome:", a == b)

# reward = number of recurrent bits set
returns = np.array([sample_genome(model, gen_seed, i).w_rec.count() for i in range(64)], dtype=np.float32)
new = ec_update(model, gen_seed, returns, learning_rate=0.15)
print(f"mean recurrent probability {model.p_rec.mean():.4f} -> {new.p_rec.mean():.4f}")
print(f"diagonal stays pinned at {float(new.p_rec.diagonal().max())}")
print(f"extracted mask after one update: {extract(new).w_rec.count()} recurrent bits set")
