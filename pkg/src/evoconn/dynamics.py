"""Discretized recurrent spiking network with 1-bit connections.

Neurons ``0 .. n_exc-1`` are excitatory, the rest inhibitory.  Per substep::

    c' = d_c * c + (E - I) + kappa_in * (W_in @ obs)
    v  = d_v * u + r_h * c'
    s' = v > 1
    u' = v * (1 - s')

where ``E``/``I`` are the integer counts of active excitatory/inhibitory
presynaptic spikes on each row of ``W_rec`` (AND + popcount).  The readout is
a leaky integrator with unit DC gain over the signed output spike counts.
"""

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .bitmatrix import BitMatrix, pack_vector, popcount64, row_words, unpack_vector
from .config import ConfigError, NetworkConfig

THRESHOLD = 1.0


def decay_coefficient(dt_ms: float, tau_ms: float) -> float:
    """exp(-dt / tau)."""
    if not tau_ms > 0:
        raise ConfigError(f"time constant must be positive, got {tau_ms}")
    if dt_ms < 0:
        raise ConfigError(f"timestep must be non-negative, got {dt_ms}")
    return math.exp(-dt_ms / tau_ms)


@dataclass(frozen=True, eq=False)
class Genome:
    """One sampled connectivity: input, recurrent and output bit matrices."""

    w_in: BitMatrix
    w_rec: BitMatrix
    w_out: BitMatrix

    def blocks(self):
        return (self.w_in, self.w_rec, self.w_out)

    def __eq__(self, other):
        if not isinstance(other, Genome):
            return NotImplemented
        return all(a == b for a, b in zip(self.blocks(), other.blocks()))

    def n_bits(self) -> int:
        return sum(b.rows * b.cols for b in self.blocks())

    def check(self, config: NetworkConfig):
        n = config.n_neurons
        expected = ((n, config.obs_dim), (n, n), (config.act_dim, n))
        got = tuple(b.shape for b in self.blocks())
        if got != expected:
            raise ValueError(f"genome shapes {got} do not match network {expected}")

    @classmethod
    def zeros(cls, config: NetworkConfig) -> "Genome":
        n = config.n_neurons
        return cls(
            BitMatrix.zeros(n, config.obs_dim),
            BitMatrix.zeros(n, n),
            BitMatrix.zeros(config.act_dim, n),
        )


@dataclass(frozen=True, eq=False)
class NeuronState:
    u: np.ndarray
    c: np.ndarray
    o: np.ndarray
    spikes: np.ndarray

    @classmethod
    def zeros(cls, config: NetworkConfig) -> "NeuronState":
        n = config.n_neurons
        return cls(
            np.zeros(n), np.zeros(n), np.zeros(config.act_dim), np.zeros(n, dtype=bool)
        )

    def __eq__(self, other):
        if not isinstance(other, NeuronState):
            return NotImplemented
        return (
            np.array_equal(self.u, other.u)
            and np.array_equal(self.c, other.c)
            and np.array_equal(self.o, other.o)
            and np.array_equal(self.spikes, other.spikes)
        )


@dataclass(frozen=True)
class Kernels:
    """Per-network constants passed to the compiled kernels."""

    exc_mask: np.ndarray
    inh_mask: np.ndarray
    coeffs: np.ndarray  # d_c, d_v, r_h, r_out, d_out, kappa_in


def network_constants(config: NetworkConfig) -> Kernels:
    n = config.n_neurons
    is_exc = np.arange(n) < config.n_exc
    coeffs = np.array(
        [
            decay_coefficient(config.dt_ms, config.tau_syn_ms),
            decay_coefficient(config.dt_ms, config.tau_m_ms),
            config.r_h,
            config.r_out,
            decay_coefficient(config.dt_ms, config.tau_out_ms),
            config.kappa_in,
        ]
    )
    return Kernels(pack_vector(is_exc), pack_vector(~is_exc), coeffs)


# compiled kernels ---------------------------------------------------------


@njit(cache=True, nogil=True)
def input_drive(w_in, obs, kappa, out):
    """kappa * (W_in @ obs) with a fixed left-to-right summation order."""
    n, d = w_in.shape
    for i in range(n):
        acc = 0.0
        for j in range(d):
            if w_in[i, j]:
                acc += obs[j]
        out[i] = kappa * acc


@njit(cache=True, nogil=True)
def lif_kernel(u, c, spk, rec, drive, exc_mask, inh_mask, dc, dv, rh, spk_out):
    """One substep in place on u, c; new spike words written to spk_out."""
    nw = spk.shape[0]
    for w in range(nw):
        spk_out[w] = 0
    for i in range(u.shape[0]):
        acc = 0
        for w in range(nw):
            hit = rec[i, w] & spk[w]
            acc += popcount64(hit & exc_mask[w])
            acc -= popcount64(hit & inh_mask[w])
        ci = dc * c[i] + acc + drive[i]
        v = dv * u[i] + rh * ci
        c[i] = ci
        if v > 1.0:
            u[i] = 0.0
            spk_out[i >> 6] |= np.uint64(1) << np.uint64(i & 63)
        else:
            u[i] = v


@njit(cache=True, nogil=True)
def readout_kernel(o, spk, out_w, exc_mask, inh_mask, rout, dout):
    nw = spk.shape[0]
    gain = 1.0 - dout
    for k in range(o.shape[0]):
        acc = 0
        for w in range(nw):
            hit = out_w[k, w] & spk[w]
            acc += popcount64(hit & exc_mask[w])
            acc -= popcount64(hit & inh_mask[w])
        o[k] = dout * o[k] + gain * (rout * acc)


@njit(cache=True, nogil=True)
def squash(o, low, high, action):
    for k in range(o.shape[0]):
        action[k] = low[k] + (math.tanh(o[k]) + 1.0) * 0.5 * (high[k] - low[k])


@njit(cache=True, nogil=True)
def control_kernel(u, c, o, spk, rec, out_w, w_in, obs, exc_mask, inh_mask, coeffs, steps, scratch):
    dc, dv, rh, rout, dout, kappa = coeffs[0], coeffs[1], coeffs[2], coeffs[3], coeffs[4], coeffs[5]
    drive = np.empty(u.shape[0])
    input_drive(w_in, obs, kappa, drive)
    for _ in range(steps):
        lif_kernel(u, c, spk, rec, drive, exc_mask, inh_mask, dc, dv, rh, scratch)
        for w in range(spk.shape[0]):
            spk[w] = scratch[w]
        readout_kernel(o, spk, out_w, exc_mask, inh_mask, rout, dout)


# python-level operations ---------------------------------------------------


def _check_state(state: NeuronState, config: NetworkConfig):
    n = config.n_neurons
    if state.u.shape != (n,) or state.c.shape != (n,) or state.spikes.shape != (n,):
        raise ValueError(f"state does not match a {n}-neuron network")
    if state.o.shape != (config.act_dim,):
        raise ValueError(f"output trace must have length {config.act_dim}")


def _check_obs(obs, config: NetworkConfig) -> np.ndarray:
    obs = np.asarray(obs, dtype=np.float64)
    if obs.shape != (config.obs_dim,):
        raise ValueError(f"observation of shape {obs.shape}, expected ({config.obs_dim},)")
    if not np.all(np.isfinite(obs)):
        raise ValueError(f"non-finite observation {obs}")
    return obs


def lif_step(state: NeuronState, genome: Genome, obs, config: NetworkConfig) -> NeuronState:
    """Advance membrane potential, synaptic current and spikes by one substep."""
    _check_state(state, config)
    genome.check(config)
    obs = _check_obs(obs, config)
    k = network_constants(config)
    drive = np.empty(config.n_neurons)
    input_drive(genome.w_in.to_dense(), obs, k.coeffs[5], drive)
    u = state.u.astype(np.float64, copy=True)
    c = state.c.astype(np.float64, copy=True)
    spk_out = np.zeros(row_words(config.n_neurons), dtype=np.uint64)
    lif_kernel(
        u, c, pack_vector(state.spikes), genome.w_rec.words(), drive,
        k.exc_mask, k.inh_mask, k.coeffs[0], k.coeffs[1], k.coeffs[2], spk_out,
    )
    return NeuronState(u, c, state.o.copy(), unpack_vector(spk_out, config.n_neurons))


def readout_step(o, spikes, genome: Genome, config: NetworkConfig):
    """Leaky-integrate the signed output spike counts; returns (o', o')."""
    o = np.array(o, dtype=np.float64)
    spikes = np.asarray(spikes, dtype=bool)
    if o.shape != (config.act_dim,) or spikes.shape != (config.n_neurons,):
        raise ValueError("readout dimensions do not match the network")
    genome.check(config)
    k = network_constants(config)
    readout_kernel(o, pack_vector(spikes), genome.w_out.words(), k.exc_mask, k.inh_mask, k.coeffs[3], k.coeffs[4])
    return o, o.copy()


def control_step(genome: Genome, state: NeuronState, obs, config: NetworkConfig, low=None, high=None):
    """Run one control interval with the observation held fixed.

    Returns ``(state', action)`` where ``action = low + (tanh(o) + 1)/2 * (high - low)``.
    Bounds default to [-1, 1].
    """
    _check_state(state, config)
    genome.check(config)
    obs = _check_obs(obs, config)
    low, high = _bounds(low, high, config.act_dim)
    k = network_constants(config)
    u = state.u.astype(np.float64, copy=True)
    c = state.c.astype(np.float64, copy=True)
    o = state.o.astype(np.float64, copy=True)
    spk = pack_vector(state.spikes)
    scratch = np.zeros_like(spk)
    control_kernel(
        u, c, o, spk, genome.w_rec.words(), genome.w_out.words(),
        genome.w_in.to_dense().astype(np.uint8), obs, k.exc_mask, k.inh_mask,
        k.coeffs, config.sim_steps_per_control, scratch,
    )
    action = np.empty(config.act_dim)
    squash(o, low, high, action)
    return NeuronState(u, c, o, unpack_vector(spk, config.n_neurons)), action


def _bounds(low, high, act_dim):
    low = -np.ones(act_dim) if low is None else np.broadcast_to(np.asarray(low, dtype=np.float64), (act_dim,)).copy()
    high = np.ones(act_dim) if high is None else np.broadcast_to(np.asarray(high, dtype=np.float64), (act_dim,)).copy()
    if np.any(low >= high):
        raise ValueError("action bounds require low < high")
    return low, high


def make_rollout(env_obs, env_step):
    """Compile a whole-episode rollout of a 1-bit network on a compiled environment.

    ``env_obs(state, params, obs_out)`` writes the observation and
    ``env_step(state, action, params)`` advances the state in place and
    returns the reward.  The result is bit-identical to driving
    :func:`control_step` through the environment's Python interface.
    """

    @njit(nogil=True)
    def rollout(env_state, params, horizon, obs_dim, low, high,
                rec, out_w, w_in, exc_mask, inh_mask, coeffs, steps):
        n = rec.shape[0]
        nw = rec.shape[1]
        u = np.zeros(n)
        c = np.zeros(n)
        o = np.zeros(out_w.shape[0])
        spk = np.zeros(nw, dtype=np.uint64)
        scratch = np.zeros(nw, dtype=np.uint64)
        obs = np.empty(obs_dim)
        action = np.empty(out_w.shape[0])
        total = 0.0
        for t in range(horizon):
            env_obs(env_state, params, obs)
            for j in range(obs_dim):
                if not np.isfinite(obs[j]):
                    raise ValueError("non-finite observation")
            control_kernel(u, c, o, spk, rec, out_w, w_in, obs, exc_mask, inh_mask, coeffs, steps, scratch)
            squash(o, low, high, action)
            r = env_step(env_state, action, params)
            if not np.isfinite(r):
                raise ValueError("non-finite reward")
            total += r
        return total

    return rollout
