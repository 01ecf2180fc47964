"""Wire codec golden frames, round trips, error taxonomy, transports."""

import random
import socket
import threading

import pytest
from hypothesis import given
from hypothesis import strategies as st

from tdpart.engine import EngineStats, Strategy
from tdpart.proto import (
    Finish,
    NoWork,
    Offload,
    ProtocolError,
    ProvideWork,
    QueueHub,
    RecvTimeout,
    SocketHub,
    SocketTransport,
    Task,
    Terminate,
    TrailingBytesError,
    TransportClosed,
    TruncatedFrameError,
    UnknownTagError,
    decode,
    encode,
)

# -- golden frames, written out by hand from the wire layout:
# u32 big-endian length (tag + payload), one tag byte, payload

GOLDEN_TERMINATE = bytes.fromhex("00000001" "06")
GOLDEN_PROVIDE_WORK = bytes.fromhex("00000001" "03")
GOLDEN_NO_WORK = bytes.fromhex("00000001" "05")

# Task(dfs, {"x": -8, "y": 7}, test_depth=2, final_depth=3):
# strategy 00; test: count 2, "x" -> -8, "y" -> 7 (sorted names); depths
GOLDEN_TASK = bytes.fromhex(
    "00000022" "01"
    "00"
    "0002"
    "0001" "78" "fffffffffffffff8"
    "0001" "79" "0000000000000007"
    "00000002" "00000003"
)

# Task(random seed 5, {}, 0, 1): strategy 02 + u64 seed
GOLDEN_TASK_RANDOM = bytes.fromhex(
    "00000014" "01"
    "02" "0000000000000005"
    "0000"
    "00000000" "00000001"
)

# Offload({"z": 1}, depth=5)
GOLDEN_OFFLOAD = bytes.fromhex(
    "00000012" "04"
    "0001" "0001" "7a" "0000000000000001"
    "00000005"
)

# Finish(created=2, suspended=1, frontier=0, queries=3, hits=1,
#        instructions=7, truncated=no, wall_us=0, paths=["01"])
GOLDEN_FINISH = bytes.fromhex(
    "00000042" "02"
    "0000000000000002"
    "0000000000000001"
    "0000000000000000"
    "0000000000000003"
    "0000000000000001"
    "0000000000000007"
    "00"
    "0000000000000000"
    "00000001" "0002" "3031"
)

GOLDEN_PAIRS = [
    (Terminate(), GOLDEN_TERMINATE),
    (ProvideWork(), GOLDEN_PROVIDE_WORK),
    (NoWork(), GOLDEN_NO_WORK),
    (Task(Strategy("dfs"), {"x": -8, "y": 7}, 2, 3), GOLDEN_TASK),
    (Task(Strategy("random", 5), {}, 0, 1), GOLDEN_TASK_RANDOM),
    (Offload({"z": 1}, 5), GOLDEN_OFFLOAD),
    (
        Finish(
            EngineStats(
                states_created=2,
                states_suspended=1,
                frontier=0,
                solver_queries=3,
                cache_hits=1,
                instructions=7,
                truncated=False,
                wall_us=0,
                paths=["01"],
            )
        ),
        GOLDEN_FINISH,
    ),
]


@pytest.mark.parametrize("msg,frame", GOLDEN_PAIRS, ids=lambda v: type(v).__name__)
def test_golden_encodings(msg, frame):
    if isinstance(msg, bytes):
        return
    assert encode(msg) == frame
    assert decode(frame) == msg


def test_terminate_is_five_bytes():
    assert encode(Terminate()) == b"\x00\x00\x00\x01\x06"


def test_bfs_strategy_code():
    frame = encode(Task(Strategy("bfs"), {}, 0, 0))
    assert frame[5] == 0x01  # strategy byte straight after the tag


def test_task_test_entries_are_name_sorted():
    a = encode(Task(Strategy("dfs"), {"b": 1, "a": 2}, 0, 0))
    b = encode(Task(Strategy("dfs"), {"a": 2, "b": 1}, 0, 0))
    assert a == b


# -- error taxonomy


def test_unknown_tag():
    with pytest.raises(UnknownTagError):
        decode(bytes.fromhex("00000001" "07"))
    with pytest.raises(UnknownTagError):
        decode(bytes.fromhex("00000001" "00"))


def test_truncated_header():
    for n in range(5):
        with pytest.raises(TruncatedFrameError):
            decode(GOLDEN_TERMINATE[:n])


def test_truncated_declared_length():
    # declares five payload bytes, delivers none
    with pytest.raises(TruncatedFrameError):
        decode(bytes.fromhex("00000005" "06"))


def test_truncated_inside_payload():
    # well-framed Task whose test section claims an entry it does not have
    payload = bytes.fromhex("00" "0001")
    frame = (len(payload) + 1).to_bytes(4, "big") + b"\x01" + payload
    with pytest.raises(TruncatedFrameError):
        decode(frame)


def test_trailing_bytes_after_frame():
    with pytest.raises(TrailingBytesError):
        decode(GOLDEN_TERMINATE + b"\x00")


def test_trailing_bytes_inside_declared_payload():
    # Terminate with a declared-but-meaningless extra payload byte
    with pytest.raises(TrailingBytesError):
        decode(bytes.fromhex("00000002" "06" "ff"))


def test_error_classes_are_distinct_protocol_errors():
    classes = {UnknownTagError, TruncatedFrameError, TrailingBytesError}
    for cls in classes:
        assert issubclass(cls, ProtocolError)
    assert UnknownTagError is not TruncatedFrameError
    assert not issubclass(UnknownTagError, TruncatedFrameError)
    assert not issubclass(TruncatedFrameError, TrailingBytesError)


# -- randomized round trips


def random_message(rng: random.Random):
    kind = rng.randrange(6)
    if kind == 0:
        strat = rng.choice(
            [Strategy("dfs"), Strategy("bfs"), Strategy("random", rng.randrange(2**64))]
        )
        test = {
            f"v{j}": rng.randrange(-(2**63), 2**63) for j in range(rng.randrange(4))
        }
        return Task(strat, test, rng.randrange(2**32), rng.randrange(2**32))
    if kind == 1:
        paths = [
            "".join(rng.choice("01") for _ in range(rng.randrange(12)))
            for _ in range(rng.randrange(5))
        ]
        return Finish(
            EngineStats(
                states_created=rng.randrange(2**64),
                states_suspended=rng.randrange(2**64),
                frontier=rng.randrange(2**64),
                solver_queries=rng.randrange(2**64),
                cache_hits=rng.randrange(2**64),
                instructions=rng.randrange(2**64),
                truncated=rng.random() < 0.5,
                wall_us=rng.randrange(2**64),
                paths=paths,
            )
        )
    if kind == 2:
        return ProvideWork()
    if kind == 3:
        test = {f"x{j}": rng.randrange(-100, 100) for j in range(rng.randrange(3))}
        return Offload(test, rng.randrange(2**32))
    if kind == 4:
        return NoWork()
    return Terminate()


def test_round_trip_seeded_sample():
    rng = random.Random(4096)
    for _ in range(500):
        msg = random_message(rng)
        assert decode(encode(msg)) == msg


@given(st.integers(min_value=0, max_value=2**64 - 1),
       st.integers(min_value=0, max_value=2**32 - 1),
       st.integers(min_value=0, max_value=2**32 - 1))
def test_round_trip_random_strategy_task(seed, td, fd):
    msg = Task(Strategy("random", seed), {"x": 1}, td, fd)
    assert decode(encode(msg)) == msg


# -- queue transports


def test_queue_hub_round_trip_and_ids():
    hub = QueueHub(2)
    t0, t1 = hub.transport_for(0), hub.transport_for(1)
    hub.send(1, Terminate())
    assert t1.recv(timeout=1) == Terminate()
    t0.send(NoWork())
    t1.send(ProvideWork())
    got = {hub.recv(timeout=1), hub.recv(timeout=1)}
    assert got == {(0, NoWork()), (1, ProvideWork())}


def test_queue_transport_poll_and_timeout():
    hub = QueueHub(1)
    t = hub.transport_for(0)
    assert t.poll() is None
    hub.send(0, ProvideWork())
    assert t.poll() == ProvideWork()
    with pytest.raises(RecvTimeout):
        t.recv(timeout=0.01)
    with pytest.raises(RecvTimeout):
        hub.recv(timeout=0.01)


def test_queue_hub_broadcast():
    hub = QueueHub(3)
    hub.broadcast(Terminate())
    for w in range(3):
        assert hub.transport_for(w).recv(timeout=1) == Terminate()


# -- socket transports


def test_socket_hub_round_trip():
    hub = SocketHub(2)
    host, port = hub.address
    transports = []

    def connect():
        s = socket.create_connection((host, port), timeout=5)
        transports.append(SocketTransport(s))

    c0 = threading.Thread(target=connect)
    c0.start(); c0.join()
    c1 = threading.Thread(target=connect)
    c1.start(); c1.join()
    hub.accept_all()
    try:
        # ids follow accept order, which here is connect order
        hub.send(0, Task(Strategy("dfs"), {"x": 1}, 0, 2))
        hub.send(1, Terminate())
        assert transports[0].recv(timeout=5) == Task(Strategy("dfs"), {"x": 1}, 0, 2)
        assert transports[1].recv(timeout=5) == Terminate()
        transports[0].send(NoWork())
        assert hub.recv(timeout=5) == (0, NoWork())
        # stream reassembly: two frames in one burst arrive as two messages
        transports[1]._sock.sendall(encode(ProvideWork()) + encode(NoWork()))
        assert hub.recv(timeout=5) == (1, ProvideWork())
        assert hub.recv(timeout=5) == (1, NoWork())
        # polling an empty socket returns None without blocking
        assert transports[0].poll() is None
        # a closed peer surfaces as TransportClosed
        transports[0].close()
        with pytest.raises(TransportClosed):
            hub.recv(timeout=5)
    finally:
        for t in transports:
            t.close()
        hub.close()


def test_socket_transport_poll_sees_pending_frame():
    hub = SocketHub(1)
    host, port = hub.address
    s = socket.create_connection((host, port), timeout=5)
    tr = SocketTransport(s)
    hub.accept_all()
    try:
        hub.send(0, ProvideWork())
        for _ in range(200):
            msg = tr.poll()
            if msg is not None:
                break
        assert msg == ProvideWork()
    finally:
        tr.close()
        hub.close()
