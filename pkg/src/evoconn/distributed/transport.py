"""Connections carrying protocol messages: in-process channels and TCP streams.

A connection exposes ``send(msg)``, ``recv() -> msg | None`` (``None`` on
orderly end of stream) and ``close()``.  A listener exposes ``accept() ->
connection | None`` (``None`` once closed).  Both implementations move encoded
frames, so in-process tests exercise the same byte format as TCP.
"""

import queue
import socket
import threading
import time

from .protocol import ProtocolError, decode, decode_body, encode, frame_length

_EOF = object()


class ConnectionClosed(ConnectionError):
    pass


class ChannelConnection:
    """One end of an in-process duplex channel."""

    def __init__(self, inbox: queue.Queue, outbox: queue.Queue, name="channel"):
        self._inbox = inbox
        self._outbox = outbox
        self._closed = False
        self.name = name

    @classmethod
    def pair(cls, name="channel"):
        a, b = queue.Queue(), queue.Queue()
        return cls(a, b, name + ":a"), cls(b, a, name + ":b")

    def send(self, msg):
        if self._closed:
            raise ConnectionClosed(f"{self.name} is closed")
        self._outbox.put(encode(msg))

    def recv(self, timeout=None):
        if self._closed:
            return None
        try:
            frame = self._inbox.get(timeout=timeout)
        except queue.Empty:
            raise TimeoutError(f"{self.name}: no message within {timeout} s") from None
        if frame is _EOF:
            self._closed = True
            return None
        return decode(frame)

    def close(self):
        if not self._closed:
            self._closed = True
            self._outbox.put(_EOF)
            # unblock a reader of our own end
            self._inbox.put(_EOF)


class ChannelListener:
    """In-process listener; ``connect()`` hands the peer end to the caller."""

    def __init__(self):
        self._pending = queue.Queue()
        self._closed = False

    def connect(self, name="worker"):
        if self._closed:
            raise ConnectionClosed("listener is closed")
        server, client = ChannelConnection.pair(name)
        self._pending.put(server)
        return client

    def accept(self):
        conn = self._pending.get()
        return None if conn is _EOF else conn

    def close(self):
        self._closed = True
        self._pending.put(_EOF)


class SocketConnection:
    def __init__(self, sock: socket.socket, name=None):
        self.sock = sock
        self.sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self.name = name or str(sock.getpeername())
        self._send_lock = threading.Lock()
        self._closed = False

    def _read_exact(self, n):
        chunks = []
        while n:
            chunk = self.sock.recv(n)
            if not chunk:
                return None
            chunks.append(chunk)
            n -= len(chunk)
        return b"".join(chunks)

    def send(self, msg):
        frame = encode(msg)
        try:
            with self._send_lock:
                self.sock.sendall(frame)
        except OSError as exc:
            raise ConnectionClosed(f"{self.name}: {exc}") from exc

    def recv(self, timeout=None):
        if self._closed:
            return None
        self.sock.settimeout(timeout)
        try:
            prefix = self._read_exact(4)
            if prefix is None:
                return None
            body = self._read_exact(frame_length(prefix))
        except socket.timeout:
            raise TimeoutError(f"{self.name}: no message within {timeout} s") from None
        except OSError:
            return None
        if body is None:
            raise ProtocolError(f"{self.name}: stream ended inside a frame")
        return decode_body(body)

    def close(self):
        if self._closed:
            return
        self._closed = True
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()


def parse_address(addr, default_port=7171):
    """``host:port``, ``host`` or ``:port`` into a (host, port) tuple."""
    if isinstance(addr, tuple):
        return addr
    host, sep, port = str(addr).rpartition(":")
    if not sep:
        return (port or "127.0.0.1", default_port)
    try:
        return (host or "0.0.0.0", int(port))
    except ValueError:
        raise ValueError(f"invalid address {addr!r}") from None


class TCPListener:
    def __init__(self, address, backlog=16):
        host, port = parse_address(address)
        self.sock = socket.create_server((host, port), backlog=backlog, reuse_port=False)
        self.address = self.sock.getsockname()[:2]

    def accept(self):
        try:
            sock, _ = self.sock.accept()
        except OSError:
            return None
        return SocketConnection(sock)

    def close(self):
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()


def tcp_connect(address, retry_for: float = 0.0):
    """Connect to a coordinator, retrying refused connections for ``retry_for`` seconds."""
    host, port = parse_address(address)
    if host == "0.0.0.0":
        host = "127.0.0.1"
    deadline = time.monotonic() + retry_for
    while True:
        try:
            return SocketConnection(socket.create_connection((host, port)))
        except OSError:
            if time.monotonic() >= deadline:
                raise
            time.sleep(0.1)


class InspectingConnection:
    """Wraps a connection and records every frame it sends or receives.

    ``log`` holds ``(direction, message, frame_bytes)`` with direction ``"out"``
    or ``"in"``.
    """

    def __init__(self, inner, log=None):
        self.inner = inner
        self.log = [] if log is None else log
        self._lock = threading.Lock()
        self.name = getattr(inner, "name", "inspected")

    def send(self, msg):
        self.inner.send(msg)
        with self._lock:
            self.log.append(("out", msg, len(encode(msg))))

    def recv(self, timeout=None):
        msg = self.inner.recv(timeout)
        if msg is not None:
            with self._lock:
                self.log.append(("in", msg, len(encode(msg))))
        return msg

    def close(self):
        self.inner.close()
