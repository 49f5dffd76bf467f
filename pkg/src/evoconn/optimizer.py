"""NES gradient estimation and the evolving-connectivity update."""

import numpy as np
from scipy.stats import rankdata

from .probability import ProbabilityModel, clip_model, sample_dense

SHAPING_MODES = ("raw", "centered", "centered_rank")


def shape_returns(returns, mode: str = "centered_rank") -> np.ndarray:
    """Fitness shaping.

    ``raw`` leaves returns unchanged, ``centered`` subtracts the mean, and
    ``centered_rank`` maps average ranks linearly onto [-0.5, 0.5].
    """
    r = np.asarray(returns, dtype=np.float64)
    if r.ndim != 1 or r.size < 2:
        raise ValueError("need a vector of at least two returns")
    if not np.all(np.isfinite(r)):
        raise ValueError("returns must be finite")
    if mode == "raw":
        return r.copy()
    if mode == "centered":
        return r - r.mean()
    if mode == "centered_rank":
        ranks = rankdata(r, method="average") - 1.0
        return ranks / (r.size - 1) - 0.5
    raise ValueError(f"unknown shaping mode {mode!r}; choose from {SHAPING_MODES}")


def _dense_blocks(genome):
    if hasattr(genome, "blocks") and not isinstance(genome, (list, tuple)):
        return [b.to_dense() for b in genome.blocks()]
    return [np.asarray(b) for b in genome]


def nes_gradient(model: ProbabilityModel, genomes, shaped_returns):
    """Score-function estimate (1/N) sum_i (theta_i - rho) / (rho (1 - rho)) R_i per block.

    ``genomes`` may hold :class:`Genome` objects or sequences of boolean blocks.
    """
    weights = np.asarray(shaped_returns, dtype=np.float64)
    if len(genomes) != weights.size:
        raise ValueError(f"{len(genomes)} genomes but {weights.size} returns")
    rho = [b.astype(np.float64) for b in model.blocks()]
    acc = [np.zeros_like(p) for p in rho]
    for g, w in zip(genomes, weights):
        for a, b, p in zip(acc, _dense_blocks(g), rho):
            a += (b - p) * w
    n = weights.size
    return [a / (n * p * (1.0 - p)) for a, p in zip(acc, rho)]


def ec_step(model: ProbabilityModel, genomes, shaped_returns, learning_rate: float) -> ProbabilityModel:
    """rho' = clip(rho + (eta / N) sum_i (theta_i - rho) R_i) for explicitly given genomes."""
    weights = np.asarray(shaped_returns, dtype=np.float64)
    if len(genomes) != weights.size:
        raise ValueError(f"{len(genomes)} genomes but {weights.size} returns")
    acc = [np.zeros(p.shape) for p in model.blocks()]
    for g, w in zip(genomes, weights):
        for a, b in zip(acc, _dense_blocks(g)):
            a += w * b
    return _apply(model, acc, weights, learning_rate)


def _apply(model, acc, weights, learning_rate):
    n = weights.size
    total = weights.sum()
    blocks = []
    for a, p in zip(acc, model.blocks()):
        p64 = p.astype(np.float64)
        blocks.append(p64 + (learning_rate / n) * (a - p64 * total))
    return clip_model(model.with_blocks(blocks))


def ec_update(model: ProbabilityModel, gen_seed: int, returns, learning_rate: float = 0.15,
              mode: str = "centered_rank", population_size=None) -> ProbabilityModel:
    """One generation of the EC update.

    Genomes are re-drawn from ``(gen_seed, i)`` one at a time, in ascending
    index order, so memory stays O(|rho|) and the sum is bit-reproducible.
    """
    returns = np.asarray(returns)
    if population_size is not None and returns.size != population_size:
        raise ValueError(f"expected {population_size} returns, got {returns.size}")
    weights = shape_returns(returns, mode)
    acc = [np.zeros(p.shape) for p in model.blocks()]
    for i, w in enumerate(weights):
        if w == 0.0:
            continue
        for a, b in zip(acc, sample_dense(model, gen_seed, i)):
            a += w * b
    return _apply(model, acc, weights, learning_rate)
