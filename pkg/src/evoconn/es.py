"""Dense-weight Evolution Strategies baseline on the same spiking network.

Weights are real matrices with the genome's shapes.  Under Dale's law they
enter the dynamics as ``|w|`` times the presynaptic group sign; otherwise
they are used as-is.  Perturbations are mirrored: index ``2k`` uses
``+eps_k`` and ``2k+1`` uses ``-eps_k``.
"""

from dataclasses import dataclass

import numpy as np
from numba import njit

from . import rng
from .config import NetworkConfig
from .dynamics import network_constants, squash
from .optimizer import shape_returns


@dataclass(frozen=True, eq=False)
class DenseGenome:
    w_in: np.ndarray
    w_rec: np.ndarray
    w_out: np.ndarray

    def __post_init__(self):
        for name in ("w_in", "w_rec", "w_out"):
            arr = np.array(getattr(self, name), dtype=np.float32)
            if arr.ndim != 2:
                raise ValueError(f"{name} must be 2-D")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} has non-finite entries")
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    def blocks(self):
        return (self.w_in, self.w_rec, self.w_out)

    @property
    def shapes(self):
        return tuple(b.shape for b in self.blocks())

    @property
    def size(self):
        return sum(b.size for b in self.blocks())

    def __eq__(self, other):
        if not isinstance(other, DenseGenome):
            return NotImplemented
        return all(a.shape == b.shape and np.array_equal(a, b) for a, b in zip(self.blocks(), other.blocks()))

    @classmethod
    def full(cls, config: NetworkConfig, value: float = 0.5) -> "DenseGenome":
        n = config.n_neurons
        return cls(
            np.full((n, config.obs_dim), value),
            np.full((n, n), value),
            np.full((config.act_dim, n), value),
        )


def _noise(gen_seed: int, pair: int, shapes):
    total = sum(r * c for r, c in shapes)
    flat = rng.standard_normal(gen_seed, pair, rng.DOMAIN_ES_NOISE, total)
    out, k = [], 0
    for r, c in shapes:
        out.append(flat[k : k + r * c].reshape(r, c))
        k += r * c
    return out


def es_perturb(center: DenseGenome, sigma: float, gen_seed: int, index: int) -> DenseGenome:
    """center + sigma * eps_i with mirrored pairs."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    sign = 1.0 if index % 2 == 0 else -1.0
    eps = _noise(gen_seed, index // 2, center.shapes)
    return DenseGenome(*(c.astype(np.float64) + (sign * sigma) * e for c, e in zip(center.blocks(), eps)))


def es_update(center: DenseGenome, gen_seed: int, returns, learning_rate: float = 0.15,
              sigma: float = 0.3, weight_decay: float = 0.1, population_size=None) -> DenseGenome:
    """center' = (1 - eta wd) center + eta / (N sigma) * sum_i R~_i eps_i, R~ = centered ranks."""
    returns = np.asarray(returns)
    if population_size is not None and returns.size != population_size:
        raise ValueError(f"expected {population_size} returns, got {returns.size}")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    weights = shape_returns(returns, "centered_rank")
    n = weights.size
    acc = [np.zeros(s) for s in center.shapes]
    for pair in range((n + 1) // 2):
        w = weights[2 * pair]
        if 2 * pair + 1 < n:
            w = w - weights[2 * pair + 1]
        if w == 0.0:
            continue
        for a, e in zip(acc, _noise(gen_seed, pair, center.shapes)):
            a += w * e
    decay = 1.0 - learning_rate * weight_decay
    step = learning_rate / (n * sigma)
    return DenseGenome(*(decay * c.astype(np.float64) + step * a for c, a in zip(center.blocks(), acc)))


def effective_weights(genome: DenseGenome, config: NetworkConfig, dale: bool = True):
    """float32 (w_in, w_rec, w_out) as seen by the dynamics."""
    n = config.n_neurons
    sign = np.where(np.arange(n) < config.n_exc, 1.0, -1.0).astype(np.float32)
    w_in, w_rec, w_out = (b.astype(np.float32) for b in genome.blocks())
    if dale:
        w_in = np.abs(w_in)
        w_rec = np.abs(w_rec) * sign[None, :]
        w_out = np.abs(w_out) * sign[None, :]
    else:
        w_rec = w_rec.copy()
    if not config.allow_self_connections:
        np.fill_diagonal(w_rec, 0.0)
    return (
        np.ascontiguousarray(w_in, dtype=np.float32),
        np.ascontiguousarray(w_rec, dtype=np.float32),
        np.ascontiguousarray(w_out, dtype=np.float32),
    )


# dense kernels ---------------------------------------------------------------


@njit(cache=True, nogil=True)
def dense_input_drive(w_in, obs, kappa, out):
    n, d = w_in.shape
    for i in range(n):
        acc = 0.0
        for j in range(d):
            acc += np.float64(w_in[i, j]) * obs[j]
        out[i] = kappa * acc


@njit(cache=True, nogil=True)
def dense_lif_kernel(u, c, spk, w_rec, drive, dc, dv, rh, spk_out):
    n = u.shape[0]
    for i in range(n):
        acc = np.float32(0.0)
        for j in range(n):
            acc += w_rec[i, j] * spk[j]
        ci = dc * c[i] + acc + drive[i]
        v = dv * u[i] + rh * ci
        c[i] = ci
        if v > 1.0:
            u[i] = 0.0
            spk_out[i] = 1.0
        else:
            u[i] = v
            spk_out[i] = 0.0


@njit(cache=True, nogil=True)
def dense_readout_kernel(o, spk, w_out, rout, dout):
    gain = 1.0 - dout
    for k in range(o.shape[0]):
        acc = np.float32(0.0)
        for j in range(spk.shape[0]):
            acc += w_out[k, j] * spk[j]
        o[k] = dout * o[k] + gain * (rout * acc)


@njit(cache=True, nogil=True)
def dense_control_kernel(u, c, o, spk, w_rec, w_out, w_in, obs, coeffs, steps, scratch):
    dc, dv, rh, rout, dout, kappa = coeffs[0], coeffs[1], coeffs[2], coeffs[3], coeffs[4], coeffs[5]
    drive = np.empty(u.shape[0])
    dense_input_drive(w_in, obs, kappa, drive)
    for _ in range(steps):
        dense_lif_kernel(u, c, spk, w_rec, drive, dc, dv, rh, scratch)
        for j in range(spk.shape[0]):
            spk[j] = scratch[j]
        dense_readout_kernel(o, spk, w_out, rout, dout)


def make_dense_rollout(env_obs, env_step):
    @njit(nogil=True)
    def rollout(env_state, params, horizon, obs_dim, low, high, w_rec, w_out, w_in, coeffs, steps):
        n = w_rec.shape[0]
        u = np.zeros(n)
        c = np.zeros(n)
        o = np.zeros(w_out.shape[0])
        spk = np.zeros(n, dtype=np.float32)
        scratch = np.zeros(n, dtype=np.float32)
        obs = np.empty(obs_dim)
        action = np.empty(w_out.shape[0])
        total = 0.0
        for t in range(horizon):
            env_obs(env_state, params, obs)
            for j in range(obs_dim):
                if not np.isfinite(obs[j]):
                    raise ValueError("non-finite observation")
            dense_control_kernel(u, c, o, spk, w_rec, w_out, w_in, obs, coeffs, steps, scratch)
            squash(o, low, high, action)
            r = env_step(env_state, action, params)
            if not np.isfinite(r):
                raise ValueError("non-finite reward")
            total += r
        return total

    return rollout


_ROLLOUTS = {}


class DensePolicy:
    """Closed-loop controller with real-valued weights (ES baseline)."""

    def __init__(self, genome: DenseGenome, config: NetworkConfig, dale: bool = True):
        n = config.n_neurons
        expected = ((n, config.obs_dim), (n, n), (config.act_dim, n))
        if genome.shapes != expected:
            raise ValueError(f"genome shapes {genome.shapes} do not match network {expected}")
        self.config = config
        self.w_in, self.w_rec, self.w_out = effective_weights(genome, config, dale)
        self.coeffs = network_constants(config).coeffs
        self.reset()

    def reset(self):
        n = self.config.n_neurons
        self.u = np.zeros(n)
        self.c = np.zeros(n)
        self.o = np.zeros(self.config.act_dim)
        self.spk = np.zeros(n, dtype=np.float32)

    def act(self, obs, low, high):
        obs = np.asarray(obs, dtype=np.float64)
        if not np.all(np.isfinite(obs)):
            raise ValueError(f"non-finite observation {obs}")
        dense_control_kernel(
            self.u, self.c, self.o, self.spk, self.w_rec, self.w_out, self.w_in, obs,
            self.coeffs, self.config.sim_steps_per_control, np.zeros_like(self.spk),
        )
        action = np.empty(self.config.act_dim)
        squash(self.o, np.asarray(low, dtype=np.float64), np.asarray(high, dtype=np.float64), action)
        return action

    def fused_return(self, env, seed: int) -> float:
        cls = type(env)
        if cls not in _ROLLOUTS:
            _ROLLOUTS[cls] = make_dense_rollout(cls.obs_kernel, cls.step_kernel)
        spec = env.spec
        return float(
            _ROLLOUTS[cls](
                env.initial_state(seed), env.params, spec.horizon, spec.obs_dim,
                np.array(spec.action_low, dtype=np.float64), np.array(spec.action_high, dtype=np.float64),
                self.w_rec, self.w_out, self.w_in, self.coeffs, self.config.sim_steps_per_control,
            )
        )
