"""Counter-based random streams.

Every random quantity in the package is a pure function of a small integer
key.  Streams come from NumPy's ``Philox`` bit generator (Philox4x64-10),
keyed with two 64-bit words::

    key = (seed, (counter << 8) | domain)

and the raw 64-bit outputs are consumed in order from counter 0.  Only the
raw output stream is used (never ``Generator`` distribution methods), because
NumPy guarantees raw bit-generator streams stay fixed across releases while
distribution algorithms may change.

Domains separate independent uses of the same ``(seed, counter)`` pair, e.g.
the three connection blocks of one individual, its episode seed, or the
Gaussian noise of the ES baseline.
"""

import numpy as np

MASK64 = (1 << 64) - 1
MAX_COUNTER = (1 << 56) - 1

# stream domains
DOMAIN_W_IN = 0
DOMAIN_W_REC = 1
DOMAIN_W_OUT = 2
DOMAIN_ES_NOISE = 8
DOMAIN_EPISODE = 9
DOMAIN_GENERATION = 10
DOMAIN_RESET = 11
DOMAIN_TARGET = 12

_INV_2_53 = 1.0 / 9007199254740992.0


def raw_stream(seed: int, counter: int, domain: int, n: int) -> np.ndarray:
    """First ``n`` raw uint64 outputs of the stream keyed by (seed, counter, domain)."""
    if not 0 <= counter <= MAX_COUNTER:
        raise ValueError(f"counter {counter} outside [0, 2**56)")
    if not 0 <= domain < 256:
        raise ValueError(f"domain {domain} outside [0, 256)")
    key = np.array([seed & MASK64, (counter << 8) | domain], dtype=np.uint64)
    bitgen = np.random.Philox(key=key)
    if n == 0:
        return np.empty(0, dtype=np.uint64)
    return np.asarray(bitgen.random_raw(n), dtype=np.uint64)


def uniform(seed: int, counter: int, domain: int, n: int) -> np.ndarray:
    """``n`` doubles in [0, 1) built from the top 53 bits of each raw word."""
    raw = raw_stream(seed, counter, domain, n)
    return (raw >> np.uint64(11)).astype(np.float64) * _INV_2_53


def standard_normal(seed: int, counter: int, domain: int, n: int) -> np.ndarray:
    """``n`` standard normals via Box-Muller, two raw words per value."""
    raw = raw_stream(seed, counter, domain, 2 * n)
    # (0, 1] so the logarithm stays finite
    u1 = ((raw[0::2] >> np.uint64(11)).astype(np.float64) + 1.0) * _INV_2_53
    u2 = (raw[1::2] >> np.uint64(11)).astype(np.float64) * _INV_2_53
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def derive_seed(seed: int, counter: int, domain: int) -> int:
    """A fresh 64-bit seed derived from (seed, counter, domain)."""
    return int(raw_stream(seed, counter, domain, 1)[0])


def generation_seed(run_seed: int, generation: int) -> int:
    return derive_seed(run_seed, generation, DOMAIN_GENERATION)


def episode_seed(gen_seed: int, index: int) -> int:
    """Episode initialization seed of population member ``index``."""
    return derive_seed(gen_seed, index, DOMAIN_EPISODE)
