"""Environments, policies and fitness functions.

``pendulum`` and ``pointmass`` are compiled environments: their dynamics are
numba kernels shared by the Python ``reset``/``step`` interface and by the
fused whole-episode rollouts, so both paths give bit-identical returns.
``maskmatch`` is a direct fitness over genomes used to test the optimizer.
"""

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from . import rng
from .bitmatrix import BitMatrix
from .config import NetworkConfig
from .es import DensePolicy
from .dynamics import (
    Genome,
    NeuronState,
    control_step,
    make_rollout,
    network_constants,
)


@dataclass(frozen=True)
class EnvironmentSpec:
    name: str
    obs_dim: int
    act_dim: int
    action_low: tuple
    action_high: tuple
    horizon: int

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if len(self.action_low) != self.act_dim or len(self.action_high) != self.act_dim:
            raise ValueError("action bounds must have act_dim entries")
        if any(lo >= hi for lo, hi in zip(self.action_low, self.action_high)):
            raise ValueError("action bounds require low < high")


class Environment(ABC):
    """reset(seed) -> obs; step(action) -> (obs, reward, done)."""

    spec: EnvironmentSpec

    @abstractmethod
    def reset(self, seed: int) -> np.ndarray: ...

    @abstractmethod
    def step(self, action): ...


class KernelEnvironment(Environment):
    """Environment whose dynamics are compiled kernels on a float64 state vector.

    Subclasses provide ``obs_kernel(state, params, out)``,
    ``step_kernel(state, action, params) -> reward`` and ``initial_state(seed)``.
    """

    obs_kernel = None
    step_kernel = None

    def __init__(self, spec: EnvironmentSpec, params: np.ndarray):
        self.spec = spec
        self.params = np.asarray(params, dtype=np.float64)
        self.state = None
        self._t = 0

    @abstractmethod
    def initial_state(self, seed: int) -> np.ndarray: ...

    def observe(self) -> np.ndarray:
        out = np.empty(self.spec.obs_dim)
        type(self).obs_kernel(self.state, self.params, out)
        return out

    def reset(self, seed: int) -> np.ndarray:
        self.state = self.initial_state(seed)
        self._t = 0
        return self.observe()

    def step(self, action):
        if self.state is None:
            raise RuntimeError("step() before reset()")
        action = np.asarray(action, dtype=np.float64).reshape(self.spec.act_dim)
        reward = type(self).step_kernel(self.state, action, self.params)
        self._t += 1
        return self.observe(), float(reward), self._t >= self.spec.horizon


# pendulum ------------------------------------------------------------------

# params: g, m, l, dt, max_speed, max_torque
@njit(cache=True, nogil=True)
def _pendulum_obs(state, params, out):
    out[0] = math.cos(state[0])
    out[1] = math.sin(state[0])
    out[2] = state[1]


@njit(cache=True, nogil=True)
def wrap_angle(theta):
    return ((theta + math.pi) % (2.0 * math.pi)) - math.pi


@njit(cache=True, nogil=True)
def _pendulum_step(state, action, params):
    g, m, l, dt, max_speed, max_torque = params[0], params[1], params[2], params[3], params[4], params[5]
    th, thdot = state[0], state[1]
    u = min(max(action[0], -max_torque), max_torque)
    w = wrap_angle(th)
    reward = -(w * w + 0.1 * thdot * thdot + 0.001 * u * u)
    # semi-implicit Euler: velocity first, then angle with the new velocity
    thdot = thdot + (3.0 * g / (2.0 * l) * math.sin(th) + 3.0 / (m * l * l) * u) * dt
    thdot = min(max(thdot, -max_speed), max_speed)
    state[0] = th + thdot * dt
    state[1] = thdot
    return reward


class Pendulum(KernelEnvironment):
    """Swing-up pendulum; theta = 0 is upright, theta = pi is hanging."""

    obs_kernel = _pendulum_obs
    step_kernel = _pendulum_step
    defaults = {
        "horizon": 200,
        "g": 10.0,
        "m": 1.0,
        "l": 1.0,
        "dt": 0.05,
        "max_speed": 8.0,
        "max_torque": 2.0,
        "jitter": 0.1,
    }

    def __init__(self, **params):
        p = {**self.defaults, **params}
        spec = EnvironmentSpec("pendulum", 3, 1, (-p["max_torque"],), (p["max_torque"],), int(p["horizon"]))
        super().__init__(spec, [p["g"], p["m"], p["l"], p["dt"], p["max_speed"], p["max_torque"]])
        self.jitter = float(p["jitter"])

    def initial_state(self, seed: int) -> np.ndarray:
        jit = rng.uniform(seed, 0, rng.DOMAIN_RESET, 2) * 2.0 - 1.0
        return np.array([math.pi + self.jitter * jit[0], self.jitter * jit[1]])

    def energy(self, state=None) -> float:
        """Conserved quantity of the torque-free dynamics (per unit inertia)."""
        th, thdot = self.state if state is None else state
        g, _, l = self.params[:3]
        return 0.5 * thdot**2 + 1.5 * g / l * math.cos(th)


# point mass ---------------------------------------------------------------

# params: dt, max_force; state: x, v, target
@njit(cache=True, nogil=True)
def _pointmass_obs(state, params, out):
    out[0] = state[0]
    out[1] = state[1]
    out[2] = state[2] - state[0]


@njit(cache=True, nogil=True)
def _pointmass_step(state, action, params):
    dt, max_force = params[0], params[1]
    a = min(max(action[0], -max_force), max_force)
    v = state[1] + a * dt
    x = state[0] + v * dt
    state[0] = x
    state[1] = v
    return -abs(state[2] - x)


class PointMass(KernelEnvironment):
    """1-D double integrator steered towards a seeded target."""

    obs_kernel = _pointmass_obs
    step_kernel = _pointmass_step
    defaults = {"horizon": 100, "dt": 0.05, "max_force": 1.0, "target_range": 1.0}

    def __init__(self, **params):
        p = {**self.defaults, **params}
        spec = EnvironmentSpec("pointmass", 3, 1, (-p["max_force"],), (p["max_force"],), int(p["horizon"]))
        super().__init__(spec, [p["dt"], p["max_force"]])
        self.target_range = float(p["target_range"])

    def initial_state(self, seed: int) -> np.ndarray:
        target = (rng.uniform(seed, 0, rng.DOMAIN_RESET, 1)[0] * 2.0 - 1.0) * self.target_range
        return np.array([0.0, 0.0, target])


class ConstantRewardEnv(Environment):
    """Pays a fixed reward every step; observations are zeros."""

    def __init__(self, reward=1.0, horizon=10, obs_dim=1, act_dim=1):
        self.spec = EnvironmentSpec("constant", obs_dim, act_dim, (-1.0,) * act_dim, (1.0,) * act_dim, horizon)
        self.reward = float(reward)
        self._t = 0

    def reset(self, seed):
        self._t = 0
        return np.zeros(self.spec.obs_dim)

    def step(self, action):
        self._t += 1
        return np.zeros(self.spec.obs_dim), self.reward, self._t >= self.spec.horizon


# policies ------------------------------------------------------------------


class SpikingPolicy:
    """Stateful closed-loop controller around a 1-bit genome."""

    def __init__(self, genome: Genome, config: NetworkConfig):
        genome.check(config)
        self.genome = genome
        self.config = config
        self.state = NeuronState.zeros(config)

    def reset(self):
        self.state = NeuronState.zeros(self.config)

    def act(self, obs, low, high):
        self.state, action = control_step(self.genome, self.state, obs, self.config, low, high)
        return action

    def fused_return(self, env: KernelEnvironment, seed: int) -> float:
        roll = _compiled_rollout(type(env))
        k = network_constants(self.config)
        spec = env.spec
        g = self.genome
        return float(
            roll(
                env.initial_state(seed), env.params, spec.horizon, spec.obs_dim,
                np.array(spec.action_low, dtype=np.float64), np.array(spec.action_high, dtype=np.float64),
                g.w_rec.words(), g.w_out.words(), g.w_in.to_dense().astype(np.uint8),
                k.exc_mask, k.inh_mask, k.coeffs, self.config.sim_steps_per_control,
            )
        )


_ROLLOUTS = {}


def _compiled_rollout(env_cls):
    if env_cls not in _ROLLOUTS:
        _ROLLOUTS[env_cls] = make_rollout(env_cls.obs_kernel, env_cls.step_kernel)
    return _ROLLOUTS[env_cls]


def episode_return(env: Environment, policy, seed: int, fused: bool = True) -> float:
    """Sum of rewards of one episode from ``env.reset(seed)``; policy state is reset first."""
    if fused and isinstance(env, KernelEnvironment) and hasattr(policy, "fused_return"):
        return policy.fused_return(env, seed)
    policy.reset()
    low = np.array(env.spec.action_low, dtype=np.float64)
    high = np.array(env.spec.action_high, dtype=np.float64)
    obs = env.reset(seed)
    total = 0.0
    for _ in range(env.spec.horizon):
        obs, reward, done = env.step(policy.act(obs, low, high))
        if not math.isfinite(reward):
            raise ValueError(f"non-finite reward {reward}")
        total += reward
        if done:
            break
    return total


# fitness tasks -------------------------------------------------------------


def mask_match_fitness(target: Genome):
    """R(theta) = number of bits where theta equals target."""
    target_dense = [b.to_dense() for b in target.blocks()]

    def fitness(genome: Genome) -> float:
        total = 0
        for t, b in zip(target_dense, genome.blocks()):
            if t.shape != b.shape:
                raise ValueError(f"genome block {b.shape} does not match target {t.shape}")
            total += int(np.count_nonzero(t == b.to_dense()))
        return float(total)

    return fitness


def mask_match_shapes(bits: int):
    """Genome layout for mask matching: all bits in a single recurrent-block row."""
    return ((0, 0), (1, bits), (0, 0))


def random_target(shapes, seed: int) -> Genome:
    blocks = []
    for k, (r, c) in enumerate(shapes):
        u = rng.uniform(seed, k, rng.DOMAIN_TARGET, r * c).reshape(r, c)
        blocks.append(BitMatrix.from_dense(u < 0.5))
    return Genome(*blocks)


@dataclass(frozen=True)
class TaskSpec:
    """Static description of a named task and its tunable constants."""

    name: str
    obs_dim: int
    act_dim: int
    defaults: dict
    params: dict = field(default_factory=dict)

    def value(self, key):
        return self.params.get(key, self.defaults[key])


_ENVS = {"pendulum": Pendulum, "pointmass": PointMass}
_MASKMATCH_DEFAULTS = {"bits": 64, "target_seed": 0}


def make_task_spec(name: str, params: dict) -> TaskSpec:
    if name in _ENVS:
        cls = _ENVS[name]
        return TaskSpec(name, 3, 1, dict(cls.defaults), dict(params))
    if name == "maskmatch":
        return TaskSpec(name, 1, 1, dict(_MASKMATCH_DEFAULTS), dict(params))
    raise KeyError(f"unknown task {name!r}; choose from {sorted([*_ENVS, 'maskmatch'])}")


def make_env(name: str, **params) -> KernelEnvironment:
    try:
        return _ENVS[name](**params)
    except KeyError:
        raise KeyError(f"unknown environment {name!r}") from None


class Task:
    """Fitness R(genome, episode_seed) shared by every optimizer and evaluation path."""

    def __init__(self, spec: TaskSpec, network: NetworkConfig, dale: bool = True):
        self.spec = spec
        self.network = network
        self.dale = dale
        if spec.name == "maskmatch":
            bits = int(spec.value("bits"))
            if bits < 1:
                raise ValueError("maskmatch needs at least one bit")
            self.shapes = mask_match_shapes(bits)
            self.target = random_target(self.shapes, int(spec.value("target_seed")))
            self._fitness = mask_match_fitness(self.target)
            self.env_name = None
        else:
            n = network.n_neurons
            self.shapes = ((n, network.obs_dim), (n, n), (network.act_dim, n))
            self.env_name = spec.name
            self._env_params = dict(spec.params)

    @property
    def is_rollout(self) -> bool:
        return self.env_name is not None

    def make_env(self) -> KernelEnvironment:
        return make_env(self.env_name, **self._env_params)

    def evaluate(self, genome, seed: int) -> float:
        if not self.is_rollout:
            if not isinstance(genome, Genome):
                raise TypeError("maskmatch scores 1-bit genomes only")
            return self._fitness(genome)
        if isinstance(genome, Genome):
            policy = SpikingPolicy(genome, self.network)
        else:
            policy = DensePolicy(genome, self.network, self.dale)
        return episode_return(self.make_env(), policy, seed)
