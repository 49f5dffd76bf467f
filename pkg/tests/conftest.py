import numpy as np
import pytest

from evoconn.config import NetworkConfig


@pytest.fixture
def small_net():
    return NetworkConfig(n_neurons=16, obs_dim=3, act_dim=2)


def naive_matvec(dense, spikes):
    """Reference double loop: out[i] = sum_j dense[i, j] * spikes[j]."""
    rows, cols = dense.shape
    out = np.zeros(rows, dtype=np.int64)
    for i in range(rows):
        for j in range(cols):
            if dense[i, j] and spikes[j]:
                out[i] += 1
    return out


def reference_substep(u, c, spikes, w_in, w_rec, obs, net):
    """Independent float64 evaluation of one LIF substep from dense matrices."""
    import math

    sign = np.where(np.arange(net.n_neurons) < net.n_exc, 1.0, -1.0)
    d_c = math.exp(-net.dt_ms / net.tau_syn_ms)
    d_v = math.exp(-net.dt_ms / net.tau_m_ms)
    kappa = net.r_in / net.r_h
    rec = (w_rec.astype(float) * sign[None, :]) @ spikes.astype(float)
    drive = kappa * (w_in.astype(float) @ obs)
    c2 = d_c * c + rec + drive
    v = d_v * u + net.r_h * c2
    s2 = v > 1.0
    return np.where(s2, 0.0, v), c2, s2
