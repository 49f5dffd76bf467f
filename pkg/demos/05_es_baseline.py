"""The real-valued ES baseline on the same task and network.

Weights are Gaussian-perturbed with mirrored noise; with Dale's law enforced
a weight's magnitude is evolved and its sign follows the presynaptic neuron.
"""

import tempfile
from pathlib import Path

from evoconn import build_config, train

for method in ("ec", "es"):
    lr = 8.0 if method == "ec" else 0.15
    cfg = build_config("pendulum", network={"n_neurons": 32},
                       optimizer={"method": method, "population_size": 128, "learning_rate": lr},
                       run={"seed": 1, "generations": 10, "threads": 4})
    with tempfile.TemporaryDirectory() as d:
        result = train(cfg, Path(d) / "m.csv", Path(d) / "c.ckpt")
    first, last = result.metrics[0]["ret_mean"], result.metrics[-1]["ret_mean"]
    print(f"{method}: mean return {first:9.2f} -> {last:9.2f} over {result.generation} generations")
