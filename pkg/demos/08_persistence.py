"""Checkpoints and masks: byte-exact round trips and thresholding."""

import tempfile
from pathlib import Path

import numpy as np

from evoconn import Checkpoint, NetworkConfig, extract, init_model, load_checkpoint, load_mask, save_checkpoint, save_mask
from evoconn.probability import ProbabilityModel

net = NetworkConfig(n_neurons=16, obs_dim=3, act_dim=1)
model = init_model(net)

with tempfile.TemporaryDirectory() as d:
    d = Path(d)
    save_checkpoint(d / "a.ecrc", Checkpoint(net, model, generation=3))
    again = load_checkpoint(d / "a.ecrc")
    save_checkpoint(d / "b.ecrc", again)
    print("checkpoint bytes:", (d / "a.ecrc").stat().st_size,
          "round trip exact:", (d / "a.ecrc").read_bytes() == (d / "b.ecrc").read_bytes())
    save_mask(d / "a.ecmk", extract(model))
    print("mask bytes:", (d / "a.ecmk").stat().st_size, "round trip exact:", load_mask(d / "a.ecmk") == extract(model))

# thresholding is strict: exactly 0.5 rounds to 0
EMPTY = np.zeros((0, 0))
row = ProbabilityModel(EMPTY, np.array([[0.7, 0.5, 0.3]], dtype=np.float32), EMPTY)
print("[0.7, 0.5, 0.3] ->", extract(row).w_rec.to_dense().astype(int)[0].tolist())
