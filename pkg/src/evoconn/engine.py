"""Population evaluation and the generation loop.

Individual ``i`` of a generation is fully determined by ``(gen_seed, i)``:
its genome is re-derived from the counter-based stream and its episode seed
is ``rng.episode_seed(gen_seed, i)``.  Returns therefore do not depend on the
number of threads, on scheduling, or on which node evaluated them.
"""

import csv
import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import rng
from .config import RunConfig
from .es import DenseGenome, es_perturb, es_update
from .optimizer import ec_update
from .persist import Checkpoint, checkpoint_bytes, network_shapes, pin_diagonal_for, save_checkpoint
from .probability import ProbabilityModel, extract, model_from_shapes, sample_genome
from .tasks import Task, make_task_spec

log = logging.getLogger(__name__)

METRICS_COLUMNS = ("gen", "ret_mean", "ret_max", "ret_min", "ret_std", "elite_ret", "seconds")
# counter reserved for the elite (extracted / center) evaluation episode
ELITE_INDEX = rng.MAX_COUNTER


class EvaluationError(RuntimeError):
    def __init__(self, index: int, cause: BaseException):
        super().__init__(f"evaluation of individual {index} failed: {cause}")
        self.index = index


class LiveCounter:
    """Tracks how many sampled genomes exist at once."""

    def __init__(self):
        self._lock = threading.Lock()
        self.current = 0
        self.peak = 0

    def __enter__(self):
        with self._lock:
            self.current += 1
            self.peak = max(self.peak, self.current)
        return self

    def __exit__(self, *exc):
        with self._lock:
            self.current -= 1


def sample_individual(model, gen_seed: int, index: int, sigma: float = None):
    if isinstance(model, ProbabilityModel):
        return sample_genome(model, gen_seed, index)
    if isinstance(model, DenseGenome):
        if sigma is None:
            raise ValueError("dense centers need sigma to sample")
        return es_perturb(model, sigma, gen_seed, index)
    raise TypeError(f"cannot sample from {type(model).__name__}")


def evaluate_population(model, task: Task, population_size: int, gen_seed: int, *,
                        threads: int = 1, index_range=None, sigma: float = None,
                        live: LiveCounter = None) -> np.ndarray:
    """Returns of individuals ``index_range`` (default ``[0, N)``) as float32.

    Genomes are sampled and dropped one at a time per thread, so at most
    ``threads`` genomes are alive simultaneously.
    """
    if population_size < 1:
        raise ValueError("population_size must be at least 1")
    lo, hi = (0, population_size) if index_range is None else index_range
    if not 0 <= lo <= hi <= population_size:
        raise ValueError(f"index range [{lo}, {hi}) outside [0, {population_size})")
    live = live or LiveCounter()
    out = np.empty(hi - lo, dtype=np.float32)

    def one(i):
        try:
            with live:
                genome = sample_individual(model, gen_seed, i, sigma)
                value = task.evaluate(genome, rng.episode_seed(gen_seed, i))
                del genome
        except Exception as exc:
            raise EvaluationError(i, exc) from exc
        out[i - lo] = value

    if threads <= 1:
        for i in range(lo, hi):
            one(i)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for _ in pool.map(one, range(lo, hi)):
                pass
    return out


def initial_state(config: RunConfig, task: Task):
    opt = config.optimizer
    if opt.method == "ec":
        return model_from_shapes(task.shapes, opt.epsilon, pin_diagonal_for(config.network, task.shapes))
    if not task.is_rollout:
        raise ValueError("the ES baseline needs a rollout task")
    return DenseGenome(*(np.full(s, opt.es_init) for s in network_shapes(config.network)))


@dataclass
class Trainer:
    """Replicable training state: every node holding one applies identical updates."""

    config: RunConfig
    state: object = None
    generation: int = 0
    best_elite: float = float("-inf")
    task: Task = field(init=False)
    live: LiveCounter = field(default_factory=LiveCounter)

    def __post_init__(self):
        spec = make_task_spec(self.config.task.name, self.config.task.params)
        self.task = Task(spec, self.config.network, dale=self.config.optimizer.es_dale)
        if self.state is None:
            self.state = initial_state(self.config, self.task)

    @property
    def population_size(self) -> int:
        return self.config.optimizer.population_size

    def gen_seed(self, generation=None) -> int:
        g = self.generation if generation is None else generation
        return rng.generation_seed(self.config.run.seed, g)

    def evaluate(self, index_range=None, threads=None) -> np.ndarray:
        return evaluate_population(
            self.state, self.task, self.population_size, self.gen_seed(),
            threads=threads or self.config.run.threads, index_range=index_range,
            sigma=self.config.optimizer.sigma, live=self.live,
        )

    def apply(self, returns) -> None:
        """Update the state from this generation's returns and advance the generation."""
        returns = np.asarray(returns, dtype=np.float32)
        opt = self.config.optimizer
        if returns.size != self.population_size:
            raise ValueError(f"expected {self.population_size} returns, got {returns.size}")
        if opt.method == "ec":
            self.state = ec_update(self.state, self.gen_seed(), returns, opt.learning_rate, opt.shaping)
        else:
            self.state = es_update(self.state, self.gen_seed(), returns, opt.learning_rate, opt.sigma, opt.weight_decay)
        self.generation += 1

    def elite(self):
        return extract(self.state) if isinstance(self.state, ProbabilityModel) else self.state

    def elite_return(self, gen_seed: int) -> float:
        value = float(np.float32(self.task.evaluate(self.elite(), rng.episode_seed(gen_seed, ELITE_INDEX))))
        self.best_elite = max(self.best_elite, value)
        return value

    def checkpoint(self) -> Checkpoint:
        return Checkpoint(self.config.network, self.state, self.generation, dale=self.config.optimizer.es_dale)

    def checkpoint_bytes(self) -> bytes:
        return checkpoint_bytes(self.checkpoint())

    def step(self, returns, started: float) -> dict:
        """Apply returns, score the elite and produce the metrics row of this generation."""
        gen, seed = self.generation, self.gen_seed()
        self.apply(returns)
        r = np.asarray(returns, dtype=np.float64)
        return {
            "gen": gen,
            "ret_mean": float(r.mean()),
            "ret_max": float(r.max()),
            "ret_min": float(r.min()),
            "ret_std": float(r.std()),
            "elite_ret": self.elite_return(seed),
            "seconds": (time.perf_counter() - started) if self.config.run.wallclock else 0.0,
        }


class MetricsWriter:
    def __init__(self, path):
        self.path = Path(path)
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._fh = open(self.path, "w", newline="")
        except OSError as exc:
            raise OSError(f"cannot open metrics file {self.path}: {exc}") from exc
        self._writer = csv.writer(self._fh, lineterminator="\n")
        self._writer.writerow(METRICS_COLUMNS)
        self._fh.flush()

    def write(self, row: dict):
        self._writer.writerow([row["gen"]] + [repr(float(row[k])) for k in METRICS_COLUMNS[1:]])
        self._fh.flush()

    def close(self):
        self._fh.close()


@dataclass
class TrainResult:
    state: object
    metrics: list
    generation: int
    best_elite: float
    checkpoint_path: Path
    metrics_path: Path
    peak_live_genomes: int


def run_generations(trainer: Trainer, evaluate, metrics_path, checkpoint_path, generations=None) -> TrainResult:
    """Shared loop of local and distributed training; ``evaluate()`` returns the full return vector."""
    cfg = trainer.config.run
    generations = cfg.generations if generations is None else generations
    checkpoint_path = Path(checkpoint_path)
    writer = MetricsWriter(metrics_path)
    rows = []
    started = time.perf_counter()
    try:
        save_checkpoint(checkpoint_path, trainer.checkpoint())
        while trainer.generation < generations:
            returns = evaluate()
            row = trainer.step(returns, started)
            rows.append(row)
            writer.write(row)
            log.info("gen %d mean %.3f max %.3f elite %.3f", row["gen"], row["ret_mean"], row["ret_max"], row["elite_ret"])
            if trainer.generation % cfg.checkpoint_every == 0 or trainer.generation == generations:
                save_checkpoint(checkpoint_path, trainer.checkpoint())
    finally:
        writer.close()
    return TrainResult(trainer.state, rows, trainer.generation, trainer.best_elite,
                       checkpoint_path, Path(metrics_path), trainer.live.peak)


def train(config: RunConfig, metrics_path=None, checkpoint_path=None) -> TrainResult:
    """Single-process training: evaluate, shape, update, log, checkpoint."""
    trainer = Trainer(config)
    return run_generations(
        trainer, trainer.evaluate,
        metrics_path or config.run.metrics_path,
        checkpoint_path or config.run.checkpoint_path,
    )
