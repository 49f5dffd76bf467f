"""Bit-packed boolean matrices and the popcount matrix-vector kernel."""

import numpy as np
from numba import njit, types
from numba.extending import intrinsic


@intrinsic
def popcount64(typingctx, x):
    """Population count of a uint64, lowered to LLVM ``ctpop``."""
    sig = types.uint64(types.uint64)

    def codegen(context, builder, signature, args):
        return builder.ctpop(args[0])

    return sig, codegen


def row_bytes(cols: int) -> int:
    return (cols + 7) // 8


def row_words(cols: int) -> int:
    return (cols + 63) // 64


def pack_rows(dense: np.ndarray) -> np.ndarray:
    """Pack a 2-D boolean array LSB-first into byte-padded rows."""
    dense = np.asarray(dense)
    if dense.ndim != 2:
        raise ValueError(f"expected a 2-D array, got shape {dense.shape}")
    return np.packbits(dense.astype(bool), axis=1, bitorder="little").reshape(
        dense.shape[0], row_bytes(dense.shape[1])
    )


def bytes_to_words(packed: np.ndarray, cols: int) -> np.ndarray:
    """Reinterpret byte rows as little-endian uint64 words (bit j -> word j//64, bit j%64)."""
    rows = packed.shape[0]
    nw = row_words(cols)
    buf = np.zeros((rows, nw * 8), dtype=np.uint8)
    buf[:, : packed.shape[1]] = packed
    return np.ascontiguousarray(buf).view("<u8").reshape(rows, nw).astype(np.uint64)


def pack_vector(bits) -> np.ndarray:
    """Pack a 1-D boolean vector into uint64 words."""
    bits = np.asarray(bits).astype(bool).reshape(1, -1)
    return bytes_to_words(pack_rows(bits), bits.shape[1])[0]


def unpack_vector(words: np.ndarray, n: int) -> np.ndarray:
    as_bytes = np.ascontiguousarray(words.astype("<u8")).view(np.uint8)
    return np.unpackbits(as_bytes, bitorder="little")[:n].astype(bool)


class BitMatrix:
    """Row-major boolean matrix, one bit per entry.

    Bit ``j`` of row ``i`` is the connection from column neuron ``j`` to row
    neuron ``i``.  Rows are padded to whole bytes, least-significant bit
    first, and the padding bits are always zero.  Instances are immutable.
    """

    __slots__ = ("rows", "cols", "bits", "_words")

    def __init__(self, rows: int, cols: int, bits: np.ndarray):
        bits = np.ascontiguousarray(bits, dtype=np.uint8)
        if bits.shape != (rows, row_bytes(cols)):
            raise ValueError(
                f"packed shape {bits.shape} does not match {rows}x{cols} "
                f"(expected {(rows, row_bytes(cols))})"
            )
        pad = cols % 8
        if pad and rows and np.any(bits[:, -1] >> pad):
            raise ValueError("padding bits beyond cols must be zero")
        bits = bits.copy()
        bits.flags.writeable = False
        self.rows = int(rows)
        self.cols = int(cols)
        self.bits = bits
        self._words = None

    @classmethod
    def from_dense(cls, dense) -> "BitMatrix":
        dense = np.asarray(dense)
        if dense.ndim != 2:
            raise ValueError(f"expected a 2-D array, got shape {dense.shape}")
        return cls(dense.shape[0], dense.shape[1], pack_rows(dense))

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "BitMatrix":
        return cls(rows, cols, np.zeros((rows, row_bytes(cols)), dtype=np.uint8))

    @property
    def shape(self):
        return (self.rows, self.cols)

    def to_dense(self) -> np.ndarray:
        if self.rows == 0:
            return np.zeros((0, self.cols), dtype=bool)
        return np.unpackbits(self.bits, axis=1, count=self.cols, bitorder="little").astype(bool)

    def get(self, i: int, j: int) -> int:
        if not (0 <= i < self.rows and 0 <= j < self.cols):
            raise IndexError(f"({i}, {j}) outside {self.rows}x{self.cols}")
        return int((self.bits[i, j >> 3] >> (j & 7)) & 1)

    def words(self) -> np.ndarray:
        """uint64 view used by the kernels (cached)."""
        if self._words is None:
            w = bytes_to_words(self.bits, self.cols)
            w.flags.writeable = False
            self._words = w
        return self._words

    def count(self) -> int:
        return int(np.unpackbits(self.bits).sum())

    def __eq__(self, other):
        if not isinstance(other, BitMatrix):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self.bits, other.bits)

    def __hash__(self):
        return hash((self.rows, self.cols, self.bits.tobytes()))

    def __repr__(self):
        return f"BitMatrix({self.rows}x{self.cols}, ones={self.count()})"


@njit(cache=True, nogil=True)
def matvec_words(m_words, v_words, out):
    """out[i] = sum_j m[i, j] & v[j] via AND + popcount."""
    rows, nw = m_words.shape
    for i in range(rows):
        acc = 0
        for w in range(nw):
            acc += popcount64(m_words[i, w] & v_words[w])
        out[i] = acc


def packed_matvec(m: BitMatrix, spikes) -> np.ndarray:
    """Integer product of a bit matrix with a boolean spike vector.

    Returns an int32 vector of length ``m.rows``.
    """
    spikes = np.asarray(spikes)
    if spikes.ndim != 1 or spikes.shape[0] != m.cols:
        raise ValueError(f"spike vector of length {spikes.shape} does not match {m.cols} columns")
    out = np.zeros(m.rows, dtype=np.int32)
    if m.rows and m.cols:
        matvec_words(m.words(), pack_vector(spikes), out)
    return out
