"""Bernoulli connection-probability model: init, sampling, clipping, extraction."""

from dataclasses import dataclass

import numpy as np

from . import rng
from .bitmatrix import BitMatrix, pack_rows
from .config import NetworkConfig
from .dynamics import Genome

BLOCK_DOMAINS = (rng.DOMAIN_W_IN, rng.DOMAIN_W_REC, rng.DOMAIN_W_OUT)
BLOCK_NAMES = ("p_in", "p_rec", "p_out")


@dataclass(frozen=True, eq=False)
class ProbabilityModel:
    """Per-connection probabilities for the input, recurrent and output blocks.

    Entries are float32 in [epsilon, 1 - epsilon].  When ``pin_diagonal`` is
    set (square recurrent block, self-connections disabled) the diagonal of
    ``p_rec`` stays at epsilon and is never sampled as a connection.
    """

    p_in: np.ndarray
    p_rec: np.ndarray
    p_out: np.ndarray
    epsilon: float = 1e-3
    pin_diagonal: bool = False

    def __post_init__(self):
        for name in BLOCK_NAMES:
            arr = np.array(getattr(self, name), dtype=np.float32)
            if arr.ndim != 2:
                raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if self.pin_diagonal and self.p_rec.shape[0] != self.p_rec.shape[1]:
            raise ValueError("diagonal pinning needs a square recurrent block")

    def blocks(self):
        return (self.p_in, self.p_rec, self.p_out)

    @property
    def shapes(self):
        return tuple(b.shape for b in self.blocks())

    @property
    def size(self) -> int:
        return sum(b.size for b in self.blocks())

    @property
    def bounds(self):
        eps = np.float32(self.epsilon)
        return eps, np.float32(1.0) - eps

    def with_blocks(self, blocks) -> "ProbabilityModel":
        return ProbabilityModel(*blocks, epsilon=self.epsilon, pin_diagonal=self.pin_diagonal)

    def __eq__(self, other):
        if not isinstance(other, ProbabilityModel):
            return NotImplemented
        return (
            self.epsilon == other.epsilon
            and self.pin_diagonal == other.pin_diagonal
            and all(a.shape == b.shape and np.array_equal(a, b) for a, b in zip(self.blocks(), other.blocks()))
        )


def model_from_shapes(shapes, epsilon=1e-3, pin_diagonal=False, value=0.5) -> ProbabilityModel:
    blocks = [np.full(s, value, dtype=np.float32) for s in shapes]
    return clip_model(ProbabilityModel(*blocks, epsilon=epsilon, pin_diagonal=pin_diagonal))


def init_model(config: NetworkConfig, epsilon: float = 1e-3) -> ProbabilityModel:
    """Maximum-entropy start: every probability 0.5 (diagonal at epsilon if pinned)."""
    n = config.n_neurons
    shapes = ((n, config.obs_dim), (n, n), (config.act_dim, n))
    return model_from_shapes(shapes, epsilon, pin_diagonal=not config.allow_self_connections)


def clip_model(model: ProbabilityModel) -> ProbabilityModel:
    """Clamp every entry into [epsilon, 1 - epsilon]; re-pin the diagonal."""
    lo, hi = model.bounds
    blocks = [np.clip(b, lo, hi).astype(np.float32) for b in model.blocks()]
    if model.pin_diagonal:
        np.fill_diagonal(blocks[1], lo)
    return model.with_blocks(blocks)


def sample_dense(model: ProbabilityModel, gen_seed: int, index: int):
    """Boolean blocks of individual ``index``; each entry uses its own stream offset."""
    out = []
    for k, (p, domain) in enumerate(zip(model.blocks(), BLOCK_DOMAINS)):
        if p.size == 0:
            out.append(np.zeros(p.shape, dtype=bool))
            continue
        u = rng.uniform(gen_seed, index, domain, p.size).reshape(p.shape)
        bits = u < p.astype(np.float64)
        if k == 1 and model.pin_diagonal:
            np.fill_diagonal(bits, False)
        out.append(bits)
    return out


def sample_genome(model: ProbabilityModel, gen_seed: int, index: int) -> Genome:
    """Draw theta_ij ~ Bernoulli(rho_ij) from the counter-based stream (gen_seed, index)."""
    return Genome(*(BitMatrix(b.shape[0], b.shape[1], pack_rows(b)) for b in sample_dense(model, gen_seed, index)))


def extract(model: ProbabilityModel) -> Genome:
    """Most likely genome: bit = 1 iff rho > 0.5 (ties go to 0)."""
    blocks = [b > np.float32(0.5) for b in model.blocks()]
    if model.pin_diagonal:
        np.fill_diagonal(blocks[1], False)
    return Genome(*(BitMatrix.from_dense(b) for b in blocks))
