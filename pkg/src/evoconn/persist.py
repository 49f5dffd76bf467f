"""Binary checkpoint and mask files.

All integers and reals are little-endian.

``ECRC`` (probability checkpoint) and ``ESRC`` (dense ES checkpoint)::

    magic[4] | version u32 | network echo | epsilon f64 (ECRC) or flags u32 (ESRC)
    | generation u64 | 3 x (rows u32 | cols u32 | rows*cols f32, row-major)

The network echo is, in order: n_neurons i64, excitatory_ratio f64, dt_ms f64,
sim_steps_per_control i64, tau_syn_ms f64, tau_m_ms f64, tau_out_ms f64,
obs_dim i64, act_dim i64, r_in f64, r_h f64, r_out f64,
allow_self_connections i64.  ESRC flags: bit 0 = Dale's law.

``ECMK`` (extracted mask)::

    magic[4] | version u32 | 3 x (rows u32 | cols u32 | packed rows)

with packed rows exactly as :class:`BitMatrix` stores them (LSB-first,
byte-padded).  Blocks are w_in, w_rec, w_out in that order.
"""

import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bitmatrix import BitMatrix, row_bytes
from .config import NetworkConfig
from .dynamics import Genome
from .es import DenseGenome
from .probability import ProbabilityModel

VERSION = 1
MAGIC_MODEL = b"ECRC"
MAGIC_DENSE = b"ESRC"
MAGIC_MASK = b"ECMK"

_ECHO = struct.Struct("<qddqdddqqdddq")
_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")
_F64 = struct.Struct("<d")
_DIMS = struct.Struct("<II")


class FormatError(ValueError):
    """Malformed, truncated, version-mismatched or dimension-inconsistent file."""


@dataclass(frozen=True)
class Checkpoint:
    network: NetworkConfig
    state: object  # ProbabilityModel or DenseGenome
    generation: int = 0
    dale: bool = True

    @property
    def kind(self) -> str:
        return "ec" if isinstance(self.state, ProbabilityModel) else "es"


def network_shapes(network: NetworkConfig):
    n = network.n_neurons
    return ((n, network.obs_dim), (n, n), (network.act_dim, n))


def pin_diagonal_for(network: NetworkConfig, shapes) -> bool:
    return (not network.allow_self_connections) and tuple(shapes) == network_shapes(network)


class _Reader:
    def __init__(self, data: bytes):
        self.data = memoryview(data)
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(f"truncated file: needed {n} bytes at offset {self.pos}, have {len(self.data) - self.pos}")
        out = bytes(self.data[self.pos : self.pos + n])
        self.pos += n
        return out

    def unpack(self, st: struct.Struct):
        return st.unpack(self.take(st.size))

    def done(self):
        if self.pos != len(self.data):
            raise FormatError(f"{len(self.data) - self.pos} trailing bytes")


def _echo(network: NetworkConfig) -> bytes:
    return _ECHO.pack(
        network.n_neurons, network.excitatory_ratio, network.dt_ms, network.sim_steps_per_control,
        network.tau_syn_ms, network.tau_m_ms, network.tau_out_ms, network.obs_dim, network.act_dim,
        network.r_in, network.r_h, network.r_out, int(network.allow_self_connections),
    )


def _read_echo(r: _Reader) -> NetworkConfig:
    v = r.unpack(_ECHO)
    try:
        return NetworkConfig(
            n_neurons=v[0], excitatory_ratio=v[1], dt_ms=v[2], sim_steps_per_control=v[3],
            tau_syn_ms=v[4], tau_m_ms=v[5], tau_out_ms=v[6], obs_dim=v[7], act_dim=v[8],
            r_in=v[9], r_h=v[10], r_out=v[11], allow_self_connections=bool(v[12]),
        )
    except ValueError as exc:
        raise FormatError(f"invalid network echo: {exc}") from None


def _header(r: _Reader, magics):
    magic = r.take(4)
    if magic not in magics:
        raise FormatError(f"bad magic {magic!r}, expected one of {magics}")
    (version,) = r.unpack(_U32)
    if version != VERSION:
        raise FormatError(f"unsupported version {version} (this build reads version {VERSION})")
    return magic


def _real_blocks(blocks) -> bytes:
    out = []
    for b in blocks:
        b = np.ascontiguousarray(b, dtype="<f4")
        out.append(_DIMS.pack(*b.shape))
        out.append(b.tobytes())
    return b"".join(out)


def _read_real_blocks(r: _Reader):
    blocks = []
    for _ in range(3):
        rows, cols = r.unpack(_DIMS)
        blocks.append(np.frombuffer(r.take(4 * rows * cols), dtype="<f4").reshape(rows, cols).astype(np.float32))
    return blocks


def checkpoint_bytes(ckpt: Checkpoint) -> bytes:
    state = ckpt.state
    if isinstance(state, ProbabilityModel):
        head = MAGIC_MODEL + _U32.pack(VERSION) + _echo(ckpt.network) + _F64.pack(state.epsilon)
    elif isinstance(state, DenseGenome):
        head = MAGIC_DENSE + _U32.pack(VERSION) + _echo(ckpt.network) + _U32.pack(int(ckpt.dale))
    else:
        raise TypeError(f"cannot checkpoint {type(state).__name__}")
    return head + _U64.pack(ckpt.generation) + _real_blocks(state.blocks())


def _check_shapes(shapes, network: NetworkConfig):
    if tuple(shapes) == network_shapes(network):
        return
    # mask-match layout: every bit in a single recurrent-block row
    if shapes[0] == (0, 0) and shapes[2] == (0, 0) and shapes[1][0] == 1:
        return
    raise FormatError(f"block shapes {tuple(shapes)} inconsistent with network {network_shapes(network)}")


def parse_checkpoint(data: bytes, expect: NetworkConfig = None) -> Checkpoint:
    r = _Reader(data)
    magic = _header(r, (MAGIC_MODEL, MAGIC_DENSE))
    network = _read_echo(r)
    if expect is not None:
        for name in ("n_neurons", "obs_dim", "act_dim"):
            if getattr(expect, name) != getattr(network, name):
                raise FormatError(
                    f"dimension mismatch: checkpoint {name}={getattr(network, name)}, "
                    f"config {name}={getattr(expect, name)}"
                )
    if magic == MAGIC_MODEL:
        (epsilon,) = r.unpack(_F64)
        (generation,) = r.unpack(_U64)
        blocks = _read_real_blocks(r)
        r.done()
        shapes = [b.shape for b in blocks]
        _check_shapes(shapes, network)
        if not 0.0 < epsilon < 0.5:
            raise FormatError(f"invalid epsilon {epsilon}")
        state = ProbabilityModel(*blocks, epsilon=epsilon, pin_diagonal=pin_diagonal_for(network, shapes))
        return Checkpoint(network, state, generation)
    (flags,) = r.unpack(_U32)
    (generation,) = r.unpack(_U64)
    blocks = _read_real_blocks(r)
    r.done()
    if tuple(b.shape for b in blocks) != network_shapes(network):
        raise FormatError("dense block shapes inconsistent with network")
    return Checkpoint(network, DenseGenome(*blocks), generation, dale=bool(flags & 1))


def mask_bytes(genome: Genome) -> bytes:
    out = [MAGIC_MASK, _U32.pack(VERSION)]
    for b in genome.blocks():
        out.append(_DIMS.pack(b.rows, b.cols))
        out.append(b.bits.tobytes())
    return b"".join(out)


def parse_mask(data: bytes) -> Genome:
    r = _Reader(data)
    _header(r, (MAGIC_MASK,))
    blocks = []
    for _ in range(3):
        rows, cols = r.unpack(_DIMS)
        raw = np.frombuffer(r.take(rows * row_bytes(cols)), dtype=np.uint8).reshape(rows, row_bytes(cols))
        try:
            blocks.append(BitMatrix(rows, cols, raw))
        except ValueError as exc:
            raise FormatError(str(exc)) from None
    r.done()
    return Genome(*blocks)


def _write_atomic(path, data: bytes):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    try:
        if path.parent and not path.parent.exists():
            path.parent.mkdir(parents=True, exist_ok=True)
        with open(tmp, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def _read(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc}") from exc


def save_checkpoint(path, ckpt: Checkpoint):
    _write_atomic(path, checkpoint_bytes(ckpt))


def load_checkpoint(path, expect: NetworkConfig = None) -> Checkpoint:
    return parse_checkpoint(_read(path), expect)


def save_mask(path, genome: Genome):
    _write_atomic(path, mask_bytes(genome))


def load_mask(path) -> Genome:
    return parse_mask(_read(path))
