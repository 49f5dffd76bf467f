import numpy as np
import pytest

from evoconn import rng
from evoconn.config import build_config
from evoconn.engine import METRICS_COLUMNS, EvaluationError, Trainer, evaluate_population, train
from evoconn.es import DenseGenome
from evoconn.persist import load_checkpoint
from evoconn.probability import extract, model_from_shapes, sample_genome
from evoconn.tasks import Task, episode_return, make_task_spec
from evoconn.tasks import SpikingPolicy


def pointmass_setup(n=12):
    cfg = build_config("pointmass", {"horizon": 25}, network={"n_neurons": n}, optimizer={"population_size": 16})
    trainer = Trainer(cfg)
    return cfg, trainer


def test_single_member_equals_direct_rollout():
    cfg, t = pointmass_setup()
    out = evaluate_population(t.state, t.task, 1, 42)
    genome = sample_genome(t.state, 42, 0)
    direct = episode_return(t.task.make_env(), SpikingPolicy(genome, cfg.network), rng.episode_seed(42, 0))
    assert out.dtype == np.float32
    assert out[0] == np.float32(direct)


def test_repeat_and_thread_count_invariance():
    _, t = pointmass_setup()
    a = evaluate_population(t.state, t.task, 16, 7, threads=1)
    b = evaluate_population(t.state, t.task, 16, 7, threads=1)
    c = evaluate_population(t.state, t.task, 16, 7, threads=8)
    np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(a, c)


def test_index_ranges_compose():
    _, t = pointmass_setup()
    full = evaluate_population(t.state, t.task, 16, 3)
    parts = [evaluate_population(t.state, t.task, 16, 3, index_range=r) for r in ((0, 5), (5, 6), (6, 16))]
    np.testing.assert_array_equal(full, np.concatenate(parts))


def test_live_genomes_bounded_by_threads():
    _, t = pointmass_setup()
    evaluate_population(t.state, t.task, 16, 3, threads=4, live=t.live)
    assert 1 <= t.live.peak <= 4


def test_task_errors_carry_index():
    _, t = pointmass_setup()

    class Broken:
        is_rollout = True

        def evaluate(self, genome, seed):
            raise ValueError("boom")

    with pytest.raises(EvaluationError) as info:
        evaluate_population(t.state, Broken(), 4, 0, index_range=(2, 4))
    assert info.value.index == 2


def test_zero_generations_checkpoint_is_initial_model(tmp_path):
    cfg = build_config("maskmatch", {"bits": 16}, optimizer={"population_size": 8}, run={"generations": 0})
    res = train(cfg, tmp_path / "m.csv", tmp_path / "c.ecrc")
    ck = load_checkpoint(tmp_path / "c.ecrc")
    assert ck.state == model_from_shapes(((0, 0), (1, 16), (0, 0)))
    assert ck.generation == 0 and res.metrics == []
    assert (tmp_path / "m.csv").read_text() == ",".join(METRICS_COLUMNS) + "\n"


def test_metrics_rows_and_elite_register(tmp_path):
    cfg = build_config("maskmatch", {"bits": 32}, optimizer={"population_size": 32},
                       run={"generations": 12, "checkpoint_every": 5})
    res = train(cfg, tmp_path / "m.csv", tmp_path / "c.ecrc")
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0] == ",".join(METRICS_COLUMNS)
    assert len(lines) == 13
    best, running = [], -np.inf
    for row in res.metrics:
        assert row["ret_min"] <= row["ret_mean"] <= row["ret_max"]
        running = max(running, row["elite_ret"])
        best.append(running)
    assert all(a <= b for a, b in zip(best, best[1:]))
    assert res.best_elite == best[-1]
    assert load_checkpoint(tmp_path / "c.ecrc").generation == 12


def test_elite_is_scored_on_updated_model(tmp_path):
    cfg = build_config("maskmatch", {"bits": 16}, optimizer={"population_size": 8}, run={"generations": 1})
    t = Trainer(cfg)
    returns = t.evaluate()
    row = t.step(returns, 0.0)
    assert row["elite_ret"] == t.task.evaluate(extract(t.state), 0)


def test_es_training_runs(tmp_path):
    cfg = build_config("pointmass", {"horizon": 10}, network={"n_neurons": 8},
                       optimizer={"method": "es", "population_size": 8}, run={"generations": 2})
    res = train(cfg, tmp_path / "m.csv", tmp_path / "c.esrc")
    assert isinstance(res.state, DenseGenome)
    assert load_checkpoint(tmp_path / "c.esrc").state == res.state


def test_es_needs_rollout_task():
    cfg = build_config("maskmatch", optimizer={"method": "es", "population_size": 4})
    with pytest.raises(ValueError):
        Trainer(cfg)


def test_wallclock_off_gives_zero_seconds(tmp_path):
    cfg = build_config("maskmatch", {"bits": 8}, optimizer={"population_size": 4},
                       run={"generations": 2, "wallclock": False})
    res = train(cfg, tmp_path / "m.csv", tmp_path / "c.ecrc")
    assert all(r["seconds"] == 0.0 for r in res.metrics)
