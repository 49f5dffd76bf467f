"""Throughput of the packed recurrent kernel against a dense float32 matvec.

Both kernels compute the recurrent input of an ``n x n`` layer for a batch of
spike vectors: the packed one as ``popcount(row & s & E) - popcount(row & s & I)``
on 64-bit words, the dense one as ``W @ s`` with signed float32 weights of the
same shape.  The ratio depends on the CPU (popcount, vector width, cache) and is
an indicator only.
"""

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numba import njit

from . import rng
from .bitmatrix import BitMatrix, pack_vector, popcount64
from .config import NetworkConfig
from .dynamics import network_constants


@njit(cache=True, nogil=True)
def packed_batch(m_words, spikes, exc_mask, inh_mask, out, iters):
    rows, nw = m_words.shape
    nvec = spikes.shape[0]
    for t in range(iters):
        s = spikes[t % nvec]
        for i in range(rows):
            acc = 0
            for w in range(nw):
                x = m_words[i, w] & s[w]
                acc += popcount64(x & exc_mask[w]) - popcount64(x & inh_mask[w])
            out[i] += acc


@njit(cache=True, nogil=True, fastmath=True)
def dense_batch(weights, spikes, out, iters):
    rows, cols = weights.shape
    nvec = spikes.shape[0]
    for t in range(iters):
        s = spikes[t % nvec]
        for i in range(rows):
            acc = np.float32(0.0)
            for j in range(cols):
                acc += weights[i, j] * s[j]
            out[i] += acc


@dataclass
class BenchResult:
    neurons: int
    iters: int
    threads: int
    packed_seconds: float
    dense_seconds: float

    @property
    def ops(self) -> int:
        # synaptic operations (one per matrix entry per matvec)
        return self.neurons * self.neurons * self.iters

    @property
    def packed_ops_per_sec(self) -> float:
        return self.ops / self.packed_seconds

    @property
    def dense_ops_per_sec(self) -> float:
        return self.ops / self.dense_seconds

    @property
    def ratio(self) -> float:
        return self.packed_ops_per_sec / self.dense_ops_per_sec

    def report(self) -> str:
        return (
            f"neurons={self.neurons} iters={self.iters} threads={self.threads}\n"
            f"packed: {self.packed_ops_per_sec:.4g} synaptic ops/s ({self.packed_seconds:.4f} s)\n"
            f"dense:  {self.dense_ops_per_sec:.4g} synaptic ops/s ({self.dense_seconds:.4f} s)\n"
            f"ratio (packed/dense): {self.ratio:.2f}"
        )


def _timed(fn, chunks, threads, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        if threads == 1:
            for c in chunks:
                fn(c)
        else:
            with ThreadPoolExecutor(threads) as pool:
                list(pool.map(fn, chunks))
        best = min(best, time.perf_counter() - t0)
    return best


def run_bench(neurons: int = 256, iters: int = 2000, threads: int = 1, seed: int = 0,
              density: float = 0.5, spike_rate: float = 0.1, repeats: int = 3) -> BenchResult:
    """Best-of-``repeats`` wall time of both kernels over ``iters`` matvecs each."""
    if neurons < 2 or iters < 1 or threads < 1:
        raise ValueError("neurons >= 2, iters >= 1 and threads >= 1 required")
    net = NetworkConfig(n_neurons=neurons)
    kern = network_constants(net)
    conn = rng.uniform(seed, 0, rng.DOMAIN_W_REC, neurons * neurons).reshape(neurons, neurons) < density
    sign = np.where(np.arange(neurons) < net.n_exc, 1.0, -1.0).astype(np.float32)
    weights = np.ascontiguousarray(conn * sign[None, :], dtype=np.float32)
    m_words = BitMatrix.from_dense(conn).words()

    nvec = 64
    spike_bits = rng.uniform(seed, 1, rng.DOMAIN_W_REC, nvec * neurons).reshape(nvec, neurons) < spike_rate
    packed_spikes = np.stack([pack_vector(s) for s in spike_bits])
    dense_spikes = spike_bits.astype(np.float32)

    # equal split of iterations across threads, each with its own accumulator
    per = [iters // threads + (1 if k < iters % threads else 0) for k in range(threads)]
    per = [p for p in per if p]
    out_i = [np.zeros(neurons, dtype=np.int64) for _ in per]
    out_f = [np.zeros(neurons, dtype=np.float32) for _ in per]

    def packed(k):
        packed_batch(m_words, packed_spikes, kern.exc_mask, kern.inh_mask, out_i[k], per[k])

    def dense(k):
        dense_batch(weights, dense_spikes, out_f[k], per[k])

    # compile and warm caches
    packed_batch(m_words, packed_spikes, kern.exc_mask, kern.inh_mask, np.zeros(neurons, dtype=np.int64), 1)
    dense_batch(weights, dense_spikes, np.zeros(neurons, dtype=np.float32), 1)

    chunks = list(range(len(per)))
    tp = _timed(packed, chunks, threads, repeats)
    td = _timed(dense, chunks, threads, repeats)
    return BenchResult(neurons, iters, threads, tp, td)
