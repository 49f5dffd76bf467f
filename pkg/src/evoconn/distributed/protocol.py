"""Wire messages of the seed-only coordinator/worker protocol.

Frame: ``length u32 | tag u8 | fields``; ``length`` counts the tag and the
fields.  Integers are little-endian, reals are 32-bit.

======  ==========  ===========================================================
tag     message     fields
======  ==========  ===========================================================
1       HELLO       worker_id u32, protocol_version u32, last_gen i64
2       ASSIGN      gen u64, gen_seed u64, index_lo u32, index_hi u32
3       RETURNS     gen u64, index_lo u32, count u32, values f32[count]
4       ALLRETURNS  gen u64, count u32, values f32[count]
5       SHUTDOWN    (none)
6       CONFIG      protocol_version u32, length u32, utf-8 run configuration
7       REFUSE      length u32, utf-8 reason
======  ==========  ===========================================================

No message carries connection or probability matrices; per generation the
traffic is O(N) scalars.
"""

import struct
from dataclasses import dataclass

import numpy as np

PROTOCOL_VERSION = 1
DEFAULT_PORT = 7171
MAX_FRAME = 64 * 1024 * 1024

_LEN = struct.Struct("<I")


class ProtocolError(ValueError):
    pass


@dataclass(frozen=True)
class Hello:
    worker_id: int
    protocol_version: int = PROTOCOL_VERSION
    last_gen: int = -1
    TAG = 1
    _st = struct.Struct("<IIq")

    def payload(self):
        return self._st.pack(self.worker_id, self.protocol_version, self.last_gen)

    @classmethod
    def parse(cls, buf):
        return cls(*_exact(cls._st, buf))


@dataclass(frozen=True)
class Assign:
    gen: int
    gen_seed: int
    index_lo: int
    index_hi: int
    TAG = 2
    _st = struct.Struct("<QQII")

    def payload(self):
        return self._st.pack(self.gen, self.gen_seed, self.index_lo, self.index_hi)

    @classmethod
    def parse(cls, buf):
        msg = cls(*_exact(cls._st, buf))
        if msg.index_hi < msg.index_lo:
            raise ProtocolError("ASSIGN with index_hi < index_lo")
        return msg


def _values(values) -> np.ndarray:
    v = np.ascontiguousarray(values, dtype="<f4")
    if v.ndim != 1:
        raise ProtocolError("values must be a vector")
    return v


def _check_finite(v):
    if not np.all(np.isfinite(v)):
        raise ProtocolError("non-finite return value")


@dataclass(frozen=True, eq=False)
class Returns:
    gen: int
    index_lo: int
    values: np.ndarray
    TAG = 3
    _st = struct.Struct("<QII")

    def payload(self):
        v = _values(self.values)
        return self._st.pack(self.gen, self.index_lo, v.size) + v.tobytes()

    @classmethod
    def parse(cls, buf):
        gen, lo, count = _head(cls._st, buf)
        v = _tail(buf, cls._st.size, count)
        _check_finite(v)
        return cls(gen, lo, v)

    def __eq__(self, other):
        return (isinstance(other, Returns) and (self.gen, self.index_lo) == (other.gen, other.index_lo)
                and np.array_equal(_values(self.values), _values(other.values)))


@dataclass(frozen=True, eq=False)
class AllReturns:
    gen: int
    values: np.ndarray
    TAG = 4
    _st = struct.Struct("<QI")

    def payload(self):
        v = _values(self.values)
        return self._st.pack(self.gen, v.size) + v.tobytes()

    @classmethod
    def parse(cls, buf):
        gen, count = _head(cls._st, buf)
        v = _tail(buf, cls._st.size, count)
        _check_finite(v)
        return cls(gen, v)

    def __eq__(self, other):
        return (isinstance(other, AllReturns) and self.gen == other.gen
                and np.array_equal(_values(self.values), _values(other.values)))


@dataclass(frozen=True)
class Shutdown:
    TAG = 5

    def payload(self):
        return b""

    @classmethod
    def parse(cls, buf):
        if buf:
            raise ProtocolError("SHUTDOWN carries no fields")
        return cls()


@dataclass(frozen=True)
class Config:
    text: str
    protocol_version: int = PROTOCOL_VERSION
    TAG = 6
    _st = struct.Struct("<II")

    def payload(self):
        raw = self.text.encode("utf-8")
        return self._st.pack(self.protocol_version, len(raw)) + raw

    @classmethod
    def parse(cls, buf):
        version, n = _head(cls._st, buf)
        raw = buf[cls._st.size :]
        if len(raw) != n:
            raise ProtocolError("CONFIG length mismatch")
        try:
            return cls(raw.decode("utf-8"), version)
        except UnicodeDecodeError as exc:
            raise ProtocolError(f"CONFIG is not utf-8: {exc}") from None


@dataclass(frozen=True)
class Refuse:
    reason: str
    TAG = 7
    _st = struct.Struct("<I")

    def payload(self):
        raw = self.reason.encode("utf-8")
        return self._st.pack(len(raw)) + raw

    @classmethod
    def parse(cls, buf):
        (n,) = _head(cls._st, buf)
        raw = buf[cls._st.size :]
        if len(raw) != n:
            raise ProtocolError("REFUSE length mismatch")
        return cls(raw.decode("utf-8", errors="replace"))


MESSAGES = {cls.TAG: cls for cls in (Hello, Assign, Returns, AllReturns, Shutdown, Config, Refuse)}


def _exact(st, buf):
    if len(buf) != st.size:
        raise ProtocolError(f"expected {st.size} payload bytes, got {len(buf)}")
    return st.unpack(buf)


def _head(st, buf):
    if len(buf) < st.size:
        raise ProtocolError(f"payload of {len(buf)} bytes shorter than header {st.size}")
    return st.unpack_from(buf)


def _tail(buf, offset, count):
    raw = buf[offset:]
    if len(raw) != 4 * count:
        raise ProtocolError(f"expected {count} values, got {len(raw)} bytes")
    return np.frombuffer(raw, dtype="<f4").astype(np.float32)


def encode(msg) -> bytes:
    """Length-prefixed frame of ``msg``."""
    body = bytes([msg.TAG]) + msg.payload()
    if len(body) > MAX_FRAME:
        raise ProtocolError(f"frame of {len(body)} bytes exceeds {MAX_FRAME}")
    return _LEN.pack(len(body)) + body


def decode_body(body: bytes):
    """Message from a frame body (tag + fields, without the length prefix)."""
    if not body:
        raise ProtocolError("empty frame")
    cls = MESSAGES.get(body[0])
    if cls is None:
        raise ProtocolError(f"unknown tag {body[0]}")
    return cls.parse(bytes(body[1:]))


def decode(frame: bytes):
    """Message from a complete frame including its length prefix."""
    if len(frame) < _LEN.size:
        raise ProtocolError("truncated length prefix")
    (n,) = _LEN.unpack_from(frame)
    if n > MAX_FRAME:
        raise ProtocolError(f"frame of {n} bytes exceeds {MAX_FRAME}")
    if len(frame) - _LEN.size != n:
        raise ProtocolError(f"frame length {n} does not match {len(frame) - _LEN.size} bytes")
    return decode_body(frame[_LEN.size :])


def frame_length(prefix: bytes) -> int:
    (n,) = _LEN.unpack(prefix)
    if n > MAX_FRAME:
        raise ProtocolError(f"frame of {n} bytes exceeds {MAX_FRAME}")
    return n
