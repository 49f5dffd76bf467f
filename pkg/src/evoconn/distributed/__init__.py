from .coordinator import Coordinator, CoordinatorError, coordinator_run, split_range
from .protocol import (
    DEFAULT_PORT, PROTOCOL_VERSION, AllReturns, Assign, Config, Hello, ProtocolError, Refuse, Returns, Shutdown,
    decode, encode,
)
from .transport import ChannelConnection, ChannelListener, InspectingConnection, TCPListener, tcp_connect
from .worker import ProtocolMismatch, Worker, worker_run

__all__ = [
    "AllReturns", "Assign", "ChannelConnection", "ChannelListener", "Config", "Coordinator", "CoordinatorError",
    "DEFAULT_PORT", "Hello", "InspectingConnection", "PROTOCOL_VERSION", "ProtocolError", "ProtocolMismatch",
    "Refuse", "Returns", "Shutdown", "TCPListener", "Worker", "coordinator_run", "decode", "encode",
    "split_range", "tcp_connect", "worker_run",
]
