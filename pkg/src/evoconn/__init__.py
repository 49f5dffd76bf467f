"""Evolving connectivity: 1-bit spiking networks trained with natural evolution strategies."""

from .bitmatrix import BitMatrix, packed_matvec
from .config import (
    ConfigError, NetworkConfig, OptimizerConfig, RunConfig, RunSettings, TaskConfig, build_config, format_config,
    load_config, parse_config,
)
from .dynamics import Genome, NeuronState, control_step, lif_step, readout_step
from .engine import Trainer, evaluate_population, train
from .es import DenseGenome, es_perturb, es_update
from .optimizer import ec_step, ec_update, nes_gradient, shape_returns
from .persist import (
    Checkpoint, FormatError, load_checkpoint, load_mask, parse_checkpoint, parse_mask, save_checkpoint, save_mask,
)
from .probability import ProbabilityModel, extract, init_model, sample_genome
from .tasks import PointMass, Pendulum, Task, episode_return, make_env, make_task_spec

__version__ = "0.1.0"

__all__ = [
    "BitMatrix", "Checkpoint", "ConfigError", "DenseGenome", "FormatError", "Genome", "NetworkConfig",
    "NeuronState", "OptimizerConfig", "Pendulum", "PointMass", "ProbabilityModel", "RunConfig", "RunSettings",
    "Task", "TaskConfig", "Trainer", "build_config", "control_step", "ec_step", "ec_update", "episode_return",
    "es_perturb", "es_update", "evaluate_population", "extract", "format_config", "init_model", "lif_step",
    "load_checkpoint", "load_config", "load_mask", "make_env", "make_task_spec", "nes_gradient", "packed_matvec",
    "parse_checkpoint", "parse_config", "parse_mask", "readout_step", "sample_genome", "save_checkpoint",
    "save_mask", "shape_returns", "train",
]
