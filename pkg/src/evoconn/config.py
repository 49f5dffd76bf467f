"""Run configuration: network settings, optimizer, task and run sections.

Configuration files are INI-style (``key = value`` under ``[network]``,
``[optimizer]``, ``[task]`` and ``[run]``).  Unknown keys are rejected.
Defaults follow the published EC / ES hyperparameter tables.
"""

import configparser
import dataclasses
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional


class ConfigError(ValueError):
    """Invalid, unknown or out-of-range configuration value."""


@dataclass(frozen=True)
class NetworkConfig:
    n_neurons: int = 256
    excitatory_ratio: float = 0.5
    dt_ms: float = 0.5
    # 16.6 ms of simulated time per control step, floored to whole substeps
    sim_steps_per_control: int = 33
    tau_syn_ms: float = 5.0
    tau_m_ms: float = 10.0
    tau_out_ms: float = 10.0
    obs_dim: int = 1
    act_dim: int = 1
    r_in: Optional[float] = None
    r_h: Optional[float] = None
    r_out: Optional[float] = None
    allow_self_connections: bool = False

    def __post_init__(self):
        if self.n_neurons < 2:
            raise ConfigError("n_neurons must be at least 2")
        if not 0.0 < self.excitatory_ratio < 1.0:
            raise ConfigError("excitatory_ratio must lie in (0, 1)")
        n_exc = math.floor(self.excitatory_ratio * self.n_neurons)
        if n_exc < 1 or self.n_neurons - n_exc < 1:
            raise ConfigError(
                f"excitatory_ratio {self.excitatory_ratio} leaves an empty group "
                f"with {self.n_neurons} neurons"
            )
        if self.dt_ms <= 0:
            raise ConfigError("dt_ms must be positive")
        for name in ("tau_syn_ms", "tau_m_ms", "tau_out_ms"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.sim_steps_per_control < 1:
            raise ConfigError("sim_steps_per_control must be at least 1")
        if self.obs_dim < 1 or self.act_dim < 1:
            raise ConfigError("obs_dim and act_dim must be at least 1")
        # variance-preserving resistances unless given explicitly
        if self.r_in is None:
            object.__setattr__(self, "r_in", 0.1 * self.tau_m_ms * math.sqrt(2.0 / self.obs_dim))
        if self.r_h is None:
            object.__setattr__(
                self, "r_h", 1.0 * (self.tau_m_ms / self.tau_syn_ms) * math.sqrt(2.0 / self.n_neurons)
            )
        if self.r_out is None:
            object.__setattr__(self, "r_out", 5.0 * self.tau_out_ms * math.sqrt(2.0 / self.n_neurons))
        for name in ("r_in", "r_h", "r_out"):
            v = getattr(self, name)
            if not math.isfinite(v) or v <= 0:
                raise ConfigError(f"{name} must be a positive finite number")

    @property
    def n_exc(self) -> int:
        return math.floor(self.excitatory_ratio * self.n_neurons)

    @property
    def n_inh(self) -> int:
        return self.n_neurons - self.n_exc

    @property
    def kappa_in(self) -> float:
        """Scale of the input current injected into c, so that its membrane-level scale is r_in."""
        return self.r_in / self.r_h

    def replace(self, **changes) -> "NetworkConfig":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class OptimizerConfig:
    method: str = "ec"
    population_size: int = 10240
    learning_rate: float = 0.15
    epsilon: float = 1e-3
    shaping: str = "centered_rank"
    sigma: float = 0.3
    weight_decay: float = 0.1
    es_dale: bool = True
    es_init: float = 0.5

    def __post_init__(self):
        if self.method not in ("ec", "es"):
            raise ConfigError(f"optimizer.method must be 'ec' or 'es', got {self.method!r}")
        if self.population_size < 2:
            raise ConfigError("population_size must be at least 2")
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be non-negative")
        if not 0.0 < self.epsilon < 0.5:
            raise ConfigError("epsilon must lie in (0, 0.5)")
        if self.shaping not in ("raw", "centered", "centered_rank"):
            raise ConfigError(f"unknown shaping {self.shaping!r}")
        if self.sigma <= 0:
            raise ConfigError("sigma must be positive")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be non-negative")


@dataclass(frozen=True)
class TaskConfig:
    name: str = "pendulum"
    # task-specific constants, validated against the task's own parameter table
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class RunSettings:
    seed: int = 0
    generations: int = 100
    checkpoint_every: int = 10
    checkpoint_path: str = "checkpoint.ecrc"
    metrics_path: str = "metrics.csv"
    threads: int = 1
    wallclock: bool = True
    port: int = 7171
    worker_timeout: float = 30.0

    def __post_init__(self):
        if self.generations < 0:
            raise ConfigError("generations must be non-negative")
        if self.checkpoint_every < 1:
            raise ConfigError("checkpoint_every must be at least 1")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class RunConfig:
    network: NetworkConfig
    optimizer: OptimizerConfig = OptimizerConfig()
    task: TaskConfig = TaskConfig()
    run: RunSettings = RunSettings()

    def replace_run(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, run=dataclasses.replace(self.run, **changes))


_SECTIONS = {
    "network": NetworkConfig,
    "optimizer": OptimizerConfig,
    "run": RunSettings,
}
# set from the task
_DERIVED_NETWORK_KEYS = {"obs_dim", "act_dim"}


def _coerce(section: str, key: str, raw: str, annotation):
    text = raw.strip()
    try:
        if annotation in (bool, "bool"):
            low = text.lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
            raise ValueError(text)
        if annotation in (int, "int"):
            return int(text, 0)
        if annotation in (float, "float", Optional[float], "Optional[float]"):
            return float(text)
        return text.strip("\"'")
    except ValueError:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r} as {annotation}") from None


def _field_types(cls):
    import typing

    hints = typing.get_type_hints(cls)
    return {f.name: hints[f.name] for f in fields(cls)}


def parse_config(text: str, source: str = "<string>") -> RunConfig:
    """Parse configuration text into a :class:`RunConfig`."""
    from .tasks import make_task_spec

    parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None

    unknown_sections = set(parser.sections()) - set(_SECTIONS) - {"task"}
    if unknown_sections:
        raise ConfigError(f"unknown sections: {sorted(unknown_sections)}")

    values = {}
    for name, cls in _SECTIONS.items():
        types_ = _field_types(cls)
        allowed = set(types_) - (_DERIVED_NETWORK_KEYS if name == "network" else set())
        items = dict(parser.items(name)) if parser.has_section(name) else {}
        unknown = sorted(set(items) - allowed)
        if unknown:
            raise ConfigError(f"unknown keys in [{name}]: {', '.join(unknown)}")
        values[name] = {k: _coerce(name, k, v, types_[k]) for k, v in items.items()}

    task_items = dict(parser.items("task")) if parser.has_section("task") else {}
    task_name = task_items.pop("name", "pendulum").strip().strip("\"'")
    try:
        spec = make_task_spec(task_name, {})
    except KeyError as exc:
        raise ConfigError(str(exc)) from None
    unknown = sorted(set(task_items) - set(spec.defaults))
    if unknown:
        raise ConfigError(f"unknown keys in [task] for {task_name!r}: {', '.join(unknown)}")
    params = {}
    for k, v in task_items.items():
        params[k] = _coerce("task", k, v, type(spec.defaults[k]))
    task_spec = make_task_spec(task_name, params)

    try:
        network = NetworkConfig(obs_dim=task_spec.obs_dim, act_dim=task_spec.act_dim, **values["network"])
        optimizer = OptimizerConfig(**values["optimizer"])
        run = RunSettings(**values["run"])
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    return RunConfig(network, optimizer, TaskConfig(task_name, params), run)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, source=str(path))


def build_config(task: str = "pendulum", task_params=None, network=None, optimizer=None, run=None) -> RunConfig:
    """Programmatic counterpart of :func:`parse_config`; each section is a dict of overrides."""
    from .tasks import make_task_spec

    try:
        spec = make_task_spec(task, {})
    except KeyError as exc:
        raise ConfigError(str(exc)) from None
    params = dict(task_params or {})
    unknown = sorted(set(params) - set(spec.defaults))
    if unknown:
        raise ConfigError(f"unknown keys in [task] for {task!r}: {', '.join(unknown)}")
    net = NetworkConfig(obs_dim=spec.obs_dim, act_dim=spec.act_dim, **(network or {}))
    return RunConfig(net, OptimizerConfig(**(optimizer or {})), TaskConfig(task, params), RunSettings(**(run or {})))


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def format_config(config: RunConfig) -> str:
    """Render the effective configuration; ``parse_config(format_config(c)) == c``."""
    lines = []
    for name, obj in (("network", config.network), ("optimizer", config.optimizer)):
        lines.append(f"[{name}]")
        for f in fields(obj):
            if name == "network" and f.name in _DERIVED_NETWORK_KEYS:
                continue
            lines.append(f"{f.name} = {_format_value(getattr(obj, f.name))}")
        lines.append("")
    lines.append("[task]")
    lines.append(f"name = {config.task.name}")
    for k in sorted(config.task.params):
        lines.append(f"{k} = {_format_value(config.task.params[k])}")
    lines.append("")
    lines.append("[run]")
    for f in fields(config.run):
        lines.append(f"{f.name} = {_format_value(getattr(config.run, f.name))}")
    return "\n".join(lines) + "\n"
