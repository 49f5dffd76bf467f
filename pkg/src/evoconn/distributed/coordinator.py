"""Coordinator node: partitions each generation, gathers returns, broadcasts them.

Only ``(gen, gen_seed, index range)`` goes out and only float32 returns come
back; every node, the coordinator included, applies the update from the same
returns vector, so the trajectory matches single-process training bit for bit.
"""

import itertools
import logging
import queue
import threading

import numpy as np

from ..config import RunConfig, format_config
from ..engine import Trainer, TrainResult, run_generations
from .protocol import PROTOCOL_VERSION, AllReturns, Assign, Config, Hello, Refuse, Returns, Shutdown
from .transport import ConnectionClosed, TCPListener

log = logging.getLogger(__name__)


class CoordinatorError(RuntimeError):
    pass


def split_range(lo: int, hi: int, parts: int):
    """Contiguous, disjoint, near-equal pieces covering ``[lo, hi)``; empty pieces dropped."""
    n = hi - lo
    bounds = [lo + (n * k) // parts for k in range(parts + 1)]
    return [(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


class Coordinator:
    def __init__(self, config: RunConfig, listener, *, wrap=None, min_workers: int = 1,
                 worker_timeout: float = None):
        self.trainer = Trainer(config)
        self.config_text = format_config(config)
        self.listener = listener
        self.wrap = wrap
        self.min_workers = max(1, min_workers)
        self.worker_timeout = config.run.worker_timeout if worker_timeout is None else worker_timeout
        self.events = queue.Queue()
        self.conns = {}
        self.workers = []  # connection ids that completed the handshake, in join order
        self.history = {}  # gen -> returns broadcast for that gen
        self._ids = itertools.count()
        self._lock = threading.Lock()
        self._closing = False
        self._gen = None
        self._outstanding = {}
        self._pending = []
        self._results = None
        self._filled = None
        self._accept_thread = threading.Thread(target=self._accept_loop, name="coordinator-accept", daemon=True)

    def _accept_loop(self):
        while True:
            conn = self.listener.accept()
            if conn is None or self._closing:
                return
            if self.wrap is not None:
                conn = self.wrap(conn)
            cid = next(self._ids)
            with self._lock:
                self.conns[cid] = conn
            threading.Thread(target=self._read_loop, args=(cid, conn), name=f"coordinator-read-{cid}",
                             daemon=True).start()

    def _read_loop(self, cid, conn):
        while True:
            try:
                msg = conn.recv()
            except Exception as exc:
                log.warning("connection %d: %s", cid, exc)
                msg = None
            self.events.put((cid, msg))
            if msg is None:
                return

    def _send(self, cid, msg) -> bool:
        conn = self.conns.get(cid)
        if conn is None:
            return False
        try:
            conn.send(msg)
            return True
        except (ConnectionClosed, OSError) as exc:
            log.warning("connection %d: send failed: %s", cid, exc)
            self._drop(cid)
            return False

    def _drop(self, cid):
        conn = self.conns.pop(cid, None)
        if conn is not None:
            conn.close()
        if cid in self.workers:
            self.workers.remove(cid)
            lost = self._outstanding.pop(cid, [])
            if lost:
                log.warning("worker %d lost with %d pending range(s); reassigning", cid, len(lost))
            self._pending.extend(lost)

    def _hello(self, cid, msg: Hello):
        gen = self.trainer.generation
        if msg.protocol_version != PROTOCOL_VERSION:
            reason = f"protocol version {msg.protocol_version} unsupported (coordinator speaks {PROTOCOL_VERSION})"
            log.warning("connection %d refused: %s", cid, reason)
            self._send(cid, Refuse(reason))
            self._drop(cid)
            return
        if msg.last_gen >= gen:
            reason = f"cannot resume from generation {msg.last_gen} (coordinator at {gen})"
            log.warning("connection %d refused: %s", cid, reason)
            self._send(cid, Refuse(reason))
            self._drop(cid)
            return
        if not self._send(cid, Config(self.config_text)):
            return
        for g in range(msg.last_gen + 1, gen):
            if not self._send(cid, AllReturns(g, self.history[g])):
                return
        if cid not in self.workers:
            self.workers.append(cid)
            log.info("worker %d (id %d) joined at generation %d", cid, msg.worker_id, gen)

    def _returns(self, cid, msg: Returns):
        owned = self._outstanding.get(cid, [])
        rng_ = next(((lo, hi) for lo, hi in owned if lo == msg.index_lo), None)
        if msg.gen != self._gen or rng_ is None or len(msg.values) != rng_[1] - rng_[0]:
            log.warning("connection %d: unexpected RETURNS gen %d lo %d ignored", cid, msg.gen, msg.index_lo)
            return
        lo, hi = rng_
        owned.remove(rng_)
        self._results[lo:hi] = msg.values
        self._filled += hi - lo

    def _handle(self, cid, msg):
        if msg is None:
            self._drop(cid)
        elif cid not in self.conns:
            return
        elif isinstance(msg, Hello):
            self._hello(cid, msg)
        elif isinstance(msg, Returns):
            self._returns(cid, msg)
        else:
            log.warning("connection %d: unexpected %s ignored", cid, type(msg).__name__)

    def _next_event(self, block: bool, need: int = 1):
        if not block:
            return self.events.get_nowait()
        timeout = None if len(self.workers) >= need else self.worker_timeout
        try:
            return self.events.get(timeout=timeout)
        except queue.Empty:
            raise CoordinatorError(
                f"{len(self.workers)} of {need} required worker(s) connected after {self.worker_timeout} s"
            ) from None

    def _drain(self):
        while True:
            try:
                cid, msg = self._next_event(block=False)
            except queue.Empty:
                return
            self._handle(cid, msg)

    def _dispatch(self):
        if not (self._pending and self.workers):
            return
        ranges, self._pending = self._pending, []
        for lo, hi in ranges:
            for (a, b), cid in zip(split_range(lo, hi, len(self.workers)), list(self.workers)):
                if cid not in self.workers:
                    self._pending.append((a, b))
                    continue
                self._outstanding.setdefault(cid, []).append((a, b))
                self._send(cid, Assign(self._gen, self.trainer.gen_seed(), a, b))
        # a failed send returns its range to _pending
        if self._pending and self.workers:
            self._dispatch()

    def evaluate(self) -> np.ndarray:
        """Gather the full return vector of the current generation from the workers."""
        t = self.trainer
        n = t.population_size
        self._gen = t.generation
        self._results = np.empty(n, dtype=np.float32)
        self._filled = 0
        self._outstanding = {}
        self._pending = [(0, n)]
        self._drain()
        need = self.min_workers if self._gen == 0 else 1
        while len(self.workers) < need:
            self._handle(*self._next_event(block=True, need=need))
        self._dispatch()
        while self._filled < n:
            self._handle(*self._next_event(block=True))
            self._dispatch()
        values = self._results
        self.history[self._gen] = values
        for cid in list(self.workers):
            self._send(cid, AllReturns(self._gen, values))
        return values.copy()

    def run(self, metrics_path=None, checkpoint_path=None, generations=None) -> TrainResult:
        cfg = self.trainer.config.run
        self._accept_thread.start()
        try:
            return run_generations(self.trainer, self.evaluate, metrics_path or cfg.metrics_path,
                                   checkpoint_path or cfg.checkpoint_path, generations)
        finally:
            self.shutdown()

    def shutdown(self):
        self._closing = True
        for cid in list(self.workers):
            self._send(cid, Shutdown())
        for cid in list(self.conns):
            self._drop(cid)
        self.listener.close()


def coordinator_run(config: RunConfig, listen=None, *, listener=None, metrics_path=None, checkpoint_path=None,
                    wrap=None, min_workers: int = 1) -> TrainResult:
    """Train with remote evaluation; outputs match :func:`evoconn.engine.train`."""
    if listener is None:
        listener = TCPListener(listen if listen is not None else ("0.0.0.0", config.run.port))
    coord = Coordinator(config, listener, wrap=wrap, min_workers=min_workers)
    return coord.run(metrics_path, checkpoint_path)
