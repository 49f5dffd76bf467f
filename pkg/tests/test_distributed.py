import logging
import threading
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evoconn.config import build_config, format_config
from evoconn.distributed import (
    PROTOCOL_VERSION, AllReturns, Assign, ChannelConnection, ChannelListener, Config, Coordinator,
    CoordinatorError, Hello, InspectingConnection, ProtocolError, ProtocolMismatch, Refuse, Returns, Shutdown,
    TCPListener, Worker, decode, encode, split_range, worker_run,
)
from evoconn.engine import train

u32 = st.integers(0, 2**32 - 1)
u64 = st.integers(0, 2**64 - 1)
values = st.lists(st.floats(allow_nan=False, allow_infinity=False, width=32), max_size=300).map(
    lambda v: np.array(v, dtype=np.float32))
messages = st.one_of(
    st.builds(Hello, u32, u32, st.integers(-2**63, 2**63 - 1)),
    st.builds(lambda g, s, a, b: Assign(g, s, min(a, b), max(a, b)), u64, u64, u32, u32),
    st.builds(Returns, u64, u32, values),
    st.builds(AllReturns, u64, values),
    st.just(Shutdown()),
    st.builds(Config, st.text(max_size=200), u32),
    st.builds(Refuse, st.text(max_size=100)),
)


@given(messages)
@settings(max_examples=300, deadline=None)
def test_framing_roundtrip(msg):
    frame = encode(msg)
    assert int.from_bytes(frame[:4], "little") == len(frame) - 4
    assert frame[4] == msg.TAG
    assert decode(frame) == msg


def test_field_layout():
    frame = encode(Assign(3, 2**64 - 1, 10, 20))
    assert frame == (25).to_bytes(4, "little") + b"\x02" + (3).to_bytes(8, "little") + b"\xff" * 8 + \
        (10).to_bytes(4, "little") + (20).to_bytes(4, "little")
    r = encode(Returns(1, 4, np.array([1.5, -2.0], dtype=np.float32)))
    assert r[-8:] == np.array([1.5, -2.0], dtype="<f4").tobytes()


@given(messages, st.data())
@settings(max_examples=100, deadline=None)
def test_truncated_frames_rejected(msg, data):
    frame = encode(msg)
    cut = data.draw(st.integers(0, len(frame) - 1))
    with pytest.raises(ProtocolError):
        decode(frame[:cut])


def test_malformed_frames_rejected():
    with pytest.raises(ProtocolError):
        decode((1).to_bytes(4, "little") + b"\x63")
    with pytest.raises(ProtocolError):
        decode(encode(AllReturns(0, np.array([np.inf], dtype=np.float32))))
    with pytest.raises(ProtocolError):
        decode(encode(Assign(0, 0, 5, 5))[:-4] + (4).to_bytes(4, "little"))


@given(st.integers(0, 5000), st.integers(1, 9))
def test_split_range_partitions(n, parts):
    pieces = split_range(0, n, parts)
    covered = [i for a, b in pieces for i in range(a, b)]
    assert covered == list(range(n))
    assert len(pieces) <= parts


def onemax(generations=10, population=48, bits=64, seed=3):
    return build_config("maskmatch", {"bits": bits}, optimizer={"population_size": population},
                        run={"seed": seed, "generations": generations, "wallclock": False, "worker_timeout": 20.0})


def local_run(cfg, tmp_path):
    train(cfg, tmp_path / "local.csv", tmp_path / "local.ecrc")
    return (tmp_path / "local.ecrc").read_bytes(), (tmp_path / "local.csv").read_text()


def distributed_run(cfg, tmp_path, workers, log=None, tag="dist"):
    listener = ChannelListener()
    wrap = (lambda c: InspectingConnection(c, log)) if log is not None else None
    coord = Coordinator(cfg, listener, wrap=wrap, min_workers=len(workers))
    threads = [threading.Thread(target=w.serve, args=(listener.connect(),), daemon=True) for w in workers]
    for t in threads:
        t.start()
    coord.run(tmp_path / f"{tag}.csv", tmp_path / f"{tag}.ecrc")
    for t in threads:
        t.join(10)
    return (tmp_path / f"{tag}.ecrc").read_bytes(), (tmp_path / f"{tag}.csv").read_text(), coord


@pytest.mark.parametrize("w", [1, 2, 4])
def test_distributed_equals_local(tmp_path, w):
    cfg = onemax()
    local_ck, local_csv = local_run(cfg, tmp_path)
    workers = [Worker(i) for i in range(w)]
    ck, csv, coord = distributed_run(cfg, tmp_path, workers)
    assert ck == local_ck and csv == local_csv
    for wk in workers:
        assert wk.trainer.state == coord.trainer.state and wk.last_gen == cfg.run.generations - 1


def test_worker_killed_mid_generation(tmp_path, caplog):
    cfg = onemax()
    local_ck, _ = local_run(cfg, tmp_path)
    with caplog.at_level(logging.WARNING):
        ck, _, _ = distributed_run(cfg, tmp_path, [Worker(0), Worker(1, fail_after_assign=4)])
    assert ck == local_ck
    assert "reassigning" in caplog.text


def test_all_workers_lost_aborts(tmp_path):
    cfg = onemax()
    listener = ChannelListener()
    coord = Coordinator(cfg, listener, worker_timeout=0.5)
    t = threading.Thread(target=Worker(0, fail_after_assign=2).serve, args=(listener.connect(),), daemon=True)
    t.start()
    with pytest.raises(CoordinatorError):
        coord.run(tmp_path / "m.csv", tmp_path / "c.ecrc")


def test_no_workers_aborts(tmp_path):
    coord = Coordinator(onemax(), ChannelListener(), worker_timeout=0.2)
    with pytest.raises(CoordinatorError):
        coord.run(tmp_path / "m.csv", tmp_path / "c.ecrc")


def test_restarted_worker_resyncs_by_replay(tmp_path):
    cfg = onemax(generations=12)
    local_ck, _ = local_run(cfg, tmp_path)
    listener = ChannelListener()
    log = []
    coord = Coordinator(cfg, listener, wrap=lambda c: InspectingConnection(c, log), min_workers=2)
    steady = Worker(0)
    flaky = Worker(1, fail_after_assign=3)

    def flaky_life():
        flaky.serve(listener.connect())  # drops during generation 2
        while coord.trainer.generation < 6:
            time.sleep(0.005)
        flaky.fail_after_assign = None
        flaky.serve(listener.connect())

    threads = [threading.Thread(target=steady.serve, args=(listener.connect(),), daemon=True),
               threading.Thread(target=flaky_life, daemon=True)]
    for t in threads:
        t.start()
    coord.run(tmp_path / "m.csv", tmp_path / "c.ecrc")
    for t in threads:
        t.join(10)
    assert (tmp_path / "c.ecrc").read_bytes() == local_ck
    hellos = [m for d, m, _ in log if isinstance(m, Hello)]
    assert [h.last_gen for h in hellos if h.worker_id == 1] == [-1, 1]
    assert flaky.trainer.state == coord.trainer.state


def test_wire_carries_only_seeds_and_returns(tmp_path):
    sizes = {}
    for bits in (16, 512):
        log = []
        cfg = onemax(generations=4, bits=bits)
        distributed_run(cfg, tmp_path, [Worker(0), Worker(1)], log=log, tag=f"b{bits}")
        kinds = {type(m) for _, m, _ in log}
        assert kinds <= {Hello, Config, Assign, Returns, AllReturns, Shutdown}
        for _, m, _ in log:
            if isinstance(m, (Returns, AllReturns)):
                assert m.values.dtype == np.float32 and len(m.values) <= cfg.optimizer.population_size
        sizes[bits] = sum(n for _, m, n in log if not isinstance(m, (Hello, Config)))
    # independent of the number of connection probabilities
    assert sizes[16] == sizes[512]
    # exact accounting: per generation and worker one ASSIGN (29 B), one RETURNS header (21 B) and one
    # ALLRETURNS (17 B + 4N); the returns themselves once (4N); one SHUTDOWN (5 B) per worker at the end
    n, w, g = 48, 2, 4
    assert sizes[16] == g * (w * (29 + 21 + 17 + 4 * n) + 4 * n) + 5 * w


def test_stale_all_returns_ignored(caplog):
    worker = Worker(0)
    a, b = ChannelConnection.pair()
    cfg = onemax(generations=2, population=4, bits=8)
    b.send(Config(format_config(cfg)))
    for g in (0, 0, 5):
        b.send(AllReturns(g, np.arange(4, dtype=np.float32)))
    b.send(Shutdown())
    with caplog.at_level(logging.WARNING):
        assert worker.serve(a) == "shutdown"
    assert worker.last_gen == 0
    assert "stale ALLRETURNS" in caplog.text and "future gen" in caplog.text


def test_version_mismatch_refused(tmp_path):
    listener = ChannelListener()
    coord = Coordinator(onemax(generations=1, population=4, bits=8), listener, worker_timeout=5)
    conn = listener.connect()
    conn.send(Hello(9, PROTOCOL_VERSION + 1, -1))
    good = Worker(0)
    t = threading.Thread(target=good.serve, args=(listener.connect(),), daemon=True)
    t.start()
    coord.run(tmp_path / "m.csv", tmp_path / "c.ecrc")
    assert isinstance(conn.recv(timeout=5), Refuse)


def test_worker_refuses_other_protocol_version():
    a, b = ChannelConnection.pair()
    b.send(Config("", PROTOCOL_VERSION + 1))
    with pytest.raises(ProtocolMismatch):
        Worker(0).serve(a)


def test_tcp_loopback(tmp_path):
    cfg = onemax(generations=5)
    local_ck, _ = local_run(cfg, tmp_path)
    listener = TCPListener(("127.0.0.1", 0))
    addr = "%s:%d" % listener.address
    coord = Coordinator(cfg, listener, min_workers=2)
    threads = [threading.Thread(target=worker_run, args=(addr, i), daemon=True) for i in range(2)]
    for t in threads:
        t.start()
    coord.run(tmp_path / "t.csv", tmp_path / "t.ecrc")
    for t in threads:
        t.join(10)
    assert (tmp_path / "t.ecrc").read_bytes() == local_ck
