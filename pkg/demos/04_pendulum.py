"""Evolving a spiking controller for the pendulum swing-up.

A short run for illustration; pass a generation count to train longer.
The acceptance suite runs 200 generations with 512 samples.
"""

import sys
import tempfile
from pathlib import Path

from evoconn import build_config, train

generations = int(sys.argv[1]) if len(sys.argv) > 1 else 15
cfg = build_config("pendulum", network={"n_neurons": 64},
                   optimizer={"population_size": 256, "learning_rate": 8.0},
                   run={"seed": 0, "generations": generations, "threads": 4})
with tempfile.TemporaryDirectory() as d:
    result = train(cfg, Path(d) / "metrics.csv", Path(d) / "pendulum.ecrc")
    for row in result.metrics:
        print(f"generation {row['gen']:3d}: mean {row['ret_mean']:9.2f}  elite {row['elite_ret']:9.2f}")
