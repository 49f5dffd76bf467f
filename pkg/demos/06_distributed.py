"""Coordinator and two workers over TCP loopback.

Only seeds and scalar returns cross the wire, and the resulting checkpoint is
byte-identical to a single-process run.
"""

import tempfile
import threading
from pathlib import Path

from evoconn import build_config, train
from evoconn.distributed import Coordinator, InspectingConnection, TCPListener, worker_run

cfg = build_config("maskmatch", {"bits": 64}, optimizer={"population_size": 256},
                   run={"seed": 5, "generations": 10, "wallclock": False})

with tempfile.TemporaryDirectory() as d:
    d = Path(d)
    train(cfg, d / "local.csv", d / "local.ecrc")

    log = []
    listener = TCPListener(("127.0.0.1", 0))
    address = "%s:%d" % listener.address
    coord = Coordinator(cfg, listener, wrap=lambda c: InspectingConnection(c, log), min_workers=2)
    threads = [threading.Thread(target=worker_run, args=(address, i)) for i in range(2)]
    for th in threads:
        th.start()
    coord.run(d / "dist.csv", d / "dist.ecrc")
    for th in threads:
        th.join()

    print("checkpoint identical to local run:", (d / "dist.ecrc").read_bytes() == (d / "local.ecrc").read_bytes())
    print("metrics identical to local run:", (d / "dist.csv").read_bytes() == (d / "local.csv").read_bytes())
    per_kind = {}
    for direction, msg, size in log:
        key = (direction, type(msg).__name__)
        per_kind[key] = per_kind.get(key, 0) + size
    for (direction, kind), size in sorted(per_kind.items()):
        print(f"{direction:>3} {kind:<10} {size:7d} bytes")
