"""Worker node: evaluates assigned index ranges and replicates every update."""

import logging

from ..config import parse_config
from ..engine import Trainer
from .protocol import PROTOCOL_VERSION, AllReturns, Assign, Config, Hello, Refuse, Returns, Shutdown
from .transport import tcp_connect

log = logging.getLogger(__name__)


class ProtocolMismatch(RuntimeError):
    pass


class Worker:
    """Holds a replica of the training state across (re)connections.

    ``last_gen`` is the last generation whose ALLRETURNS were applied (-1 for
    a fresh replica); it is announced in HELLO so the coordinator can replay
    what was missed.
    """

    def __init__(self, worker_id: int = 0, threads: int = None, fail_after_assign: int = None):
        self.worker_id = worker_id
        self.threads = threads
        self.trainer = None
        self.config_text = None
        self.assignments = 0
        # test hook: drop the connection upon receiving the n-th ASSIGN
        self.fail_after_assign = fail_after_assign

    @property
    def last_gen(self) -> int:
        return -1 if self.trainer is None else self.trainer.generation - 1

    def _configure(self, msg: Config, conn) -> bool:
        """Adopt the coordinator's configuration; True if HELLO must be re-sent."""
        if msg.protocol_version != PROTOCOL_VERSION:
            raise ProtocolMismatch(f"coordinator speaks protocol {msg.protocol_version}, worker {PROTOCOL_VERSION}")
        if self.trainer is not None and msg.text == self.config_text:
            return False
        stale = self.trainer is not None
        config = parse_config(msg.text, source="coordinator")
        if self.threads:
            config = config.replace_run(threads=self.threads)
        self.trainer = Trainer(config)
        self.config_text = msg.text
        if stale:
            log.warning("worker %d: configuration changed, replica reset", self.worker_id)
            conn.send(Hello(self.worker_id, PROTOCOL_VERSION, self.last_gen))
        return stale

    def serve(self, conn) -> str:
        """Run one session; returns ``"shutdown"`` or ``"disconnected"``."""
        conn.send(Hello(self.worker_id, PROTOCOL_VERSION, self.last_gen))
        try:
            while True:
                msg = conn.recv()
                if msg is None:
                    return "disconnected"
                if isinstance(msg, Refuse):
                    raise ProtocolMismatch(f"coordinator refused worker {self.worker_id}: {msg.reason}")
                if isinstance(msg, Config):
                    self._configure(msg, conn)
                elif isinstance(msg, Shutdown):
                    return "shutdown"
                elif self.trainer is None:
                    log.warning("worker %d: %s before CONFIG ignored", self.worker_id, type(msg).__name__)
                elif isinstance(msg, Assign):
                    self.assignments += 1
                    if self.fail_after_assign is not None and self.assignments >= self.fail_after_assign:
                        log.warning("worker %d: simulated failure", self.worker_id)
                        return "disconnected"
                    self._assign(msg, conn)
                elif isinstance(msg, AllReturns):
                    self._all_returns(msg)
                else:
                    log.warning("worker %d: unexpected %s ignored", self.worker_id, type(msg).__name__)
        finally:
            conn.close()

    def _assign(self, msg: Assign, conn):
        t = self.trainer
        if msg.gen != t.generation or msg.gen_seed != t.gen_seed():
            log.warning("worker %d: ASSIGN for gen %d while replica is at gen %d ignored",
                        self.worker_id, msg.gen, t.generation)
            return
        values = t.evaluate((msg.index_lo, msg.index_hi))
        conn.send(Returns(msg.gen, msg.index_lo, values))

    def _all_returns(self, msg: AllReturns):
        t = self.trainer
        if msg.gen < t.generation:
            log.warning("worker %d: stale ALLRETURNS for gen %d ignored (replica at gen %d)",
                        self.worker_id, msg.gen, t.generation)
            return
        if msg.gen > t.generation:
            log.warning("worker %d: ALLRETURNS for future gen %d ignored (replica at gen %d)",
                        self.worker_id, msg.gen, t.generation)
            return
        t.apply(msg.values)


def worker_run(address, worker_id: int = 0, threads: int = None, connect_timeout: float = 10.0) -> Worker:
    """Connect to a coordinator over TCP and serve until SHUTDOWN or disconnect."""
    worker = Worker(worker_id, threads)
    conn = tcp_connect(address, retry_for=connect_timeout)
    reason = worker.serve(conn)
    log.info("worker %d finished: %s", worker_id, reason)
    return worker
