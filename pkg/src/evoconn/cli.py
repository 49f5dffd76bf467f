"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 configuration error, 3 runtime error.
"""

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import rng
from .config import ConfigError, load_config
from .distributed.protocol import DEFAULT_PORT
from .persist import FormatError, load_checkpoint, save_mask
from .probability import ProbabilityModel, extract
from .tasks import Task, make_task_spec

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3

log = logging.getLogger("evoconn")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _common(p):
    p.add_argument("--seed", type=int, default=None, help="run / evaluation seed")
    p.add_argument("--threads", type=int, default=None, help="evaluation threads")
    p.add_argument("--metrics-out", default=None, help="CSV file for metrics")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="evoconn", description="Evolving connectivity for recurrent spiking networks.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train locally from a config file")
    p.add_argument("config")
    p.add_argument("--checkpoint-out", default=None)
    p.add_argument("--generations", type=int, default=None)
    _common(p)

    p = sub.add_parser("eval", help="roll out the extracted (or ES center) policy of a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("--task", required=True)
    p.add_argument("--episodes", type=int, default=10)
    p.add_argument("--param", action="append", default=[], metavar="KEY=VALUE", help="task parameter override")
    _common(p)

    p = sub.add_parser("extract", help="write the thresholded mask of a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("mask_out")
    _common(p)

    p = sub.add_parser("bench", help="packed vs dense recurrent kernel throughput")
    p.add_argument("--neurons", type=int, default=256)
    p.add_argument("--iters", type=int, default=10000)
    _common(p)

    p = sub.add_parser("coordinator", help="train with remote workers")
    p.add_argument("config")
    p.add_argument("--listen", default=None, help=f"host:port (default 0.0.0.0:{DEFAULT_PORT} or run.port)")
    p.add_argument("--checkpoint-out", default=None)
    p.add_argument("--min-workers", type=int, default=1)
    _common(p)

    p = sub.add_parser("worker", help="evaluate for a coordinator")
    p.add_argument("--connect", required=True, help="host:port of the coordinator")
    p.add_argument("--worker-id", type=int, default=0)
    _common(p)
    return parser


def _run_config(args):
    cfg = load_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.threads is not None:
        overrides["threads"] = args.threads
    if args.metrics_out is not None:
        overrides["metrics_path"] = args.metrics_out
    if getattr(args, "checkpoint_out", None) is not None:
        overrides["checkpoint_path"] = args.checkpoint_out
    if getattr(args, "generations", None) is not None:
        overrides["generations"] = args.generations
    try:
        return cfg.replace_run(**overrides)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def _print_summary(result):
    last = result.metrics[-1] if result.metrics else None
    print(f"generations: {result.generation}")
    if last is not None:
        print(f"final mean return: {last['ret_mean']!r}")
        print(f"final elite return: {last['elite_ret']!r}")
    print(f"checkpoint: {result.checkpoint_path}")
    print(f"metrics: {result.metrics_path}")


def cmd_train(args):
    from .engine import train

    result = train(_run_config(args))
    _print_summary(result)


def _parse_params(items, defaults):
    params = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--param expects KEY=VALUE, got {item!r}")
        if key not in defaults:
            raise ConfigError(f"unknown task parameter {key!r}; known: {', '.join(sorted(defaults))}")
        kind = type(defaults[key])
        try:
            params[key] = kind(int(value, 0)) if kind is int else kind(value)
        except ValueError:
            raise ConfigError(f"task parameter {key}: cannot parse {value!r}") from None
    return params


def evaluate_checkpoint(path, task_name, episodes, seed, params=None, threads=1):
    """Per-episode returns of the checkpoint's extracted genome (or ES center)."""
    ckpt = load_checkpoint(path)
    try:
        spec = make_task_spec(task_name, {})
        overrides = _parse_params(params or [], spec.defaults)
        if task_name == "maskmatch" and "bits" not in overrides:
            # mask length follows the checkpoint
            overrides["bits"] = int(ckpt.state.blocks()[1].shape[1])
        spec = make_task_spec(task_name, overrides)
    except KeyError as exc:
        raise ConfigError(str(exc)) from None
    net = ckpt.network
    if (spec.obs_dim, spec.act_dim) != (net.obs_dim, net.act_dim):
        raise FormatError(
            f"checkpoint has obs_dim={net.obs_dim}, act_dim={net.act_dim}; task {task_name!r} needs "
            f"{spec.obs_dim}, {spec.act_dim}"
        )
    task = Task(spec, net, dale=ckpt.dale)
    policy = extract(ckpt.state) if isinstance(ckpt.state, ProbabilityModel) else ckpt.state
    seeds = [rng.episode_seed(seed, k) for k in range(episodes)]
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(threads) as pool:
            returns = list(pool.map(lambda s: task.evaluate(policy, s), seeds))
    else:
        returns = [task.evaluate(policy, s) for s in seeds]
    return np.asarray(returns, dtype=np.float64), seeds


def cmd_eval(args):
    if args.episodes < 1:
        raise UsageError("--episodes must be at least 1")
    seed = 0 if args.seed is None else args.seed
    returns, seeds = evaluate_checkpoint(args.checkpoint, args.task, args.episodes, seed, args.param,
                                         args.threads or 1)
    if args.metrics_out:
        _write_csv(args.metrics_out, ("episode", "episode_seed", "return"),
                   [(k, s, repr(float(r))) for k, (s, r) in enumerate(zip(seeds, returns))])
    print(f"mean return over {args.episodes} episode(s): {float(returns.mean())!r}")


def cmd_extract(args):
    ckpt = load_checkpoint(args.checkpoint)
    if not isinstance(ckpt.state, ProbabilityModel):
        raise FormatError("extract needs a probability checkpoint (ECRC); ES checkpoints hold real weights")
    genome = extract(ckpt.state)
    save_mask(args.mask_out, genome)
    print(f"wrote {args.mask_out}: {genome.n_bits()} bits, {sum(b.count() for b in genome.blocks())} set")


def cmd_bench(args):
    from .bench import run_bench

    if args.neurons < 2 or args.iters < 1:
        raise UsageError("--neurons must be >= 2 and --iters >= 1")
    result = run_bench(args.neurons, args.iters, threads=args.threads or 1,
                       seed=0 if args.seed is None else args.seed)
    print(result.report())
    if args.metrics_out:
        _write_csv(args.metrics_out, ("neurons", "iters", "threads", "packed_ops_per_sec", "dense_ops_per_sec", "ratio"),
                   [(result.neurons, result.iters, result.threads, repr(result.packed_ops_per_sec),
                     repr(result.dense_ops_per_sec), repr(result.ratio))])


def cmd_coordinator(args):
    from .distributed.coordinator import coordinator_run

    cfg = _run_config(args)
    listen = args.listen if args.listen is not None else ("0.0.0.0", cfg.run.port)
    result = coordinator_run(cfg, listen, min_workers=args.min_workers)
    _print_summary(result)


def cmd_worker(args):
    from .distributed.worker import worker_run

    if args.seed is not None:
        log.warning("--seed is ignored by workers; the coordinator's configuration is used")
    worker = worker_run(args.connect, worker_id=args.worker_id, threads=args.threads)
    print(f"worker {args.worker_id} applied {worker.last_gen + 1} generation(s)")


def _write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


COMMANDS = {
    "train": cmd_train, "eval": cmd_eval, "extract": cmd_extract, "bench": cmd_bench,
    "coordinator": cmd_coordinator, "worker": cmd_worker,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"{exc}\n{parser.format_usage()}", file=sys.stderr, end="")
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.threads is not None and args.threads < 1:
            raise UsageError("--threads must be at least 1")
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
