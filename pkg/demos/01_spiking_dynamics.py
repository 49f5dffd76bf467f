"""A 1-bit spiking network, one substep and one control interval at a time.

Connections are bits. The sign of a synapse comes from the presynaptic
neuron: the first half of the population is excitatory, the second half
inhibitory.  A spiking neuron is hard-reset to zero.
"""

import numpy as np

from evoconn import BitMatrix, Genome, NetworkConfig, NeuronState, control_step, lif_step

net = NetworkConfig(n_neurons=16, obs_dim=2, act_dim=1)
r = np.random.default_rng(0)
w_rec = r.random((16, 16)) < 0.3
np.fill_diagonal(w_rec, False)
genome = Genome(
    BitMatrix.from_dense(r.random((16, 2)) < 0.5),
    BitMatrix.from_dense(w_rec),
    BitMatrix.from_dense(r.random((1, 16)) < 0.5),
)
print(f"{genome.n_bits()} connection bits, {genome.w_rec.count()} recurrent synapses set")

state = NeuronState.zeros(net)
obs = np.array([1.5, -0.5])
for t in range(20):
    state = lif_step(state, genome, obs, net)
    assert np.all(state.u[state.spikes] == 0.0)  # reset after every spike
    print(f"substep {t:2d}: {int(state.spikes.sum()):2d} spikes, mean u = {state.u.mean():+.4f}")

# a control interval runs the substeps with the observation held and squashes the readout
state = NeuronState.zeros(net)
for k in range(5):
    state, action = control_step(genome, state, obs, net, low=[-2.0], high=[2.0])
    print(f"control step {k}: action = {action[0]:+.4f}, readout o = {state.o[0]:+.4f}")
