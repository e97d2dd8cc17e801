import random
import socket
import struct
import threading

import pytest
from hypothesis import given
from hypothesis import strategies as st

from foggate.errors import ConfigurationError, TransportError
from foggate.simnet import AdversaryHook, SimNet, tcp_connect, tcp_listen


def pair(hook=None, seed=0):
    net = SimNet(seed)
    a, b = net.add_endpoint("a"), net.add_endpoint("b")
    net.connect(a, b, hook)
    return net, a, b


def test_passthrough_byte_identical():
    net, a, b = pair()
    net.send("a", "b", b"frame")
    assert net.step() == 1
    assert b.receive() == [("a", b"frame")]


def test_order_preserved():
    net, a, b = pair()
    for i in range(5):
        net.send("a", "b", bytes([i]))
    net.step()
    assert [f for _, f in b.receive()] == [bytes([i]) for i in range(5)]


def test_eavesdrop_copies():
    hook = AdversaryHook.eavesdrop()
    net, a, b = pair(hook)
    net.send("a", "b", b"one")
    net.send("b", "a", b"two")
    net.step()
    assert b.receive() == [("a", b"one")] and a.receive() == [("b", b"two")]
    assert hook.capture_log == [b"one", b"two"]


def test_eavesdrop_target_direction():
    hook = AdversaryHook.eavesdrop(target="b")
    net, a, b = pair(hook)
    net.send("a", "b", b"one")
    net.send("b", "a", b"two")
    net.step()
    assert hook.capture_log == [b"one"]


def test_drop_all():
    net, a, b = pair(AdversaryHook.drop(1.0))
    for _ in range(10):
        net.send("a", "b", b"x")
    net.step()
    assert b.receive() == []


def test_replay_once_across_steps():
    net, a, b = pair(AdversaryHook.replay(1))
    net.send("a", "b", b"r")
    net.step()
    net.step()
    assert [f for _, f in b.receive()] == [b"r", b"r"]
    net.step()
    assert b.receive() == []


@given(st.binary(min_size=1, max_size=64), st.sets(st.integers(0, 63), max_size=8))
def test_tamper_alters_exactly_configured_bytes(frame, positions):
    hook = AdversaryHook.tamper(positions=positions or {0}, mask=0x5A)
    net, a, b = pair(hook)
    net.send("a", "b", frame)
    net.step()
    (_, got), = b.receive()
    changed = {i for i in range(len(frame)) if got[i] != frame[i]}
    assert changed == {p for p in (positions or {0}) if p < len(frame)}


def test_inject_and_flood():
    hook = AdversaryHook.inject([b"i1", b"i2"], target="b")
    net, a, b = pair(hook)
    net.step()
    assert b.receive() == [("a", b"i1"), ("a", b"i2")]
    net.step()
    assert b.receive() == []

    flood = AdversaryHook.flood(rate=3, duration=2, target="b")
    net, a, b = pair(flood)
    for _ in range(4):
        net.step()
    assert len(b.receive()) == 6 and flood.injected == 6


def test_bounded_inbox_drops_tail():
    net = SimNet()
    a, b = net.add_endpoint("a"), net.add_endpoint("b", inbox_limit=2)
    net.connect(a, b)
    for i in range(4):
        net.send(a, b, bytes([i]))
    net.step()
    assert [f for _, f in b.receive()] == [b"\x00", b"\x01"]
    assert b.overflow_drops == 2


def test_errors():
    net, a, b = pair()
    with pytest.raises(ConfigurationError):
        net.connect("a", "b")
    with pytest.raises(ConfigurationError):
        net.send("a", "nobody", b"x")
    net.add_endpoint("c")
    with pytest.raises(ConfigurationError):
        net.send("a", "c", b"x")
    with pytest.raises(ConfigurationError):
        AdversaryHook("teleport")
    with pytest.raises(ConfigurationError):
        AdversaryHook.flood(1, 1, target=None)


def test_virtual_clock():
    net = SimNet(step_seconds=0.5, epoch=100.0)
    net.step()
    net.advance(2.0)
    assert net.now() == 102.5


def run_noisy(seed):
    rng = random.Random(99)
    hook = AdversaryHook.drop(0.5)
    net, a, b = pair(hook, seed)
    tamper = AdversaryHook.tamper(rule=lambda f, r: [r.randrange(len(f))])
    c = net.add_endpoint("c")
    net.connect(a, c, tamper)
    for _ in range(30):
        net.send("a", "b", rng.randbytes(8))
        net.send("a", "c", rng.randbytes(8))
        net.step()
    return b.receive(), c.receive()


def test_seeded_runs_reproducible():
    assert run_noisy(5) == run_noisy(5)
    assert run_noisy(5) != run_noisy(6)


def test_capture_export(tmp_path):
    hook = AdversaryHook.eavesdrop()
    net, a, b = pair(hook)
    net.send("a", "b", bytes(range(20)))
    net.step()
    path = tmp_path / "cap.txt"
    hook.export_capture(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "# frame 0 length 20"
    assert lines[1].startswith("000000 00000000 00 01 02")
    assert lines[2] == "000000 00000010 10 11 12 13"


def test_sim_transport():
    net, a, b = pair()
    ta, tb = net.transport("a", "b"), net.transport("b", "a")
    ta.send(b"ping")
    net.step()
    assert tb.recv() == b"ping"
    assert tb.recv() is None


# sockets


def test_tcp_round_trip():
    with tcp_listen("127.0.0.1:0") as listener:
        box = {}

        def serve():
            conn = listener.accept(timeout=5)
            box["got"] = [conn.recv(timeout=5), conn.recv(timeout=5)]
            conn.send(b"pong")
            conn.close()

        t = threading.Thread(target=serve)
        t.start()
        with tcp_connect(f"127.0.0.1:{listener.port}") as client:
            client.send(b"ping" * 1000)
            client.send(b"")
            assert client.recv(timeout=5) == b"pong"
            assert client.recv(timeout=5) is None
        t.join()
    assert box["got"] == [b"ping" * 1000, b""]


def test_tcp_framing_is_length_prefixed():
    with tcp_listen("127.0.0.1:0") as listener:
        raw = socket.create_connection(("127.0.0.1", listener.port))
        conn = listener.accept(timeout=5)
        conn.send(b"abc")
        assert raw.recv(7) == struct.pack(">I", 3) + b"abc"
        raw.sendall(struct.pack(">I", 2) + b"hi")
        assert conn.recv(timeout=5) == b"hi"
        raw.close()
        conn.close()


def test_tcp_connect_refused():
    with tcp_listen("127.0.0.1:0") as listener:
        port = listener.port
    with pytest.raises(TransportError) as info:
        tcp_connect(f"127.0.0.1:{port}", timeout=1)
    assert str(port) in str(info.value)


def test_tcp_bad_address():
    with pytest.raises(ConfigurationError):
        tcp_listen("no-port")
