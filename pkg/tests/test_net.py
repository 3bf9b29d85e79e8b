import numpy as np
import pytest
from hypothesis import given, strategies as st

from pwxgb.errors import ConfigError, TransportError
from pwxgb.net import FRAME_OVERHEAD, FlowAudit, Frame, FrameKind, PartyTopology, connect
from pwxgb.secure_ops import SecureContext, sec_add
from pwxgb.sharing import ZeroSharer

SERVERS = (100, 101, 102)


def test_topology_rules():
    t = PartyTopology(0, (1, 2), SERVERS)
    assert t.m == 3 and t.providers == (0, 1, 2)
    assert len(t.links()) == 3 * 2 // 2 + 3 * 3 + 3
    assert t.role(0) == {"active"} and t.role(101) == {"server"}
    with pytest.raises(ConfigError):
        PartyTopology(0, (1,), (100, 100, 101))
    with pytest.raises(ConfigError):
        PartyTopology(0, (1, 1), SERVERS)
    with pytest.raises(ConfigError):
        PartyTopology(0, (), (100, 101))


def test_servers_may_be_farms():
    t = PartyTopology(0, (1, 2), (0, 1, 2))
    assert t.role(1) == {"passive", "server"}
    with connect(t) as mesh:
        mesh.send(0, 1, Frame(1, 0, FrameKind.CONTROL, b"x"))
        assert mesh.recv(0, 1).payload == b"x"


def test_frame_wire_format():
    f = Frame(7, 3, FrameKind.RESULT, b"abc")
    b = f.to_bytes()
    assert b[:4] == (len(b) - 4).to_bytes(4, "little")
    assert b[4:12] == (7).to_bytes(8, "little") and b[12:16] == (3).to_bytes(4, "little")
    assert b[16] == FrameKind.RESULT and b[17:21] == (3).to_bytes(4, "little")
    assert Frame.from_bytes(b) == f
    assert f.wire_size == len(b) == FRAME_OVERHEAD + 3


def test_frame_length_mismatch():
    b = bytearray(Frame(1, 1, 0, b"abcd").to_bytes())
    with pytest.raises(TransportError):
        Frame.from_bytes(bytes(b[:-1]))
    b[17] = 9  # payload length prefix
    with pytest.raises(TransportError):
        Frame.from_bytes(bytes(b))


@given(st.integers(0, 2**64 - 1), st.integers(0, 2**32 - 1), st.integers(0, 255), st.binary(max_size=300))
def test_frame_round_trip(sid, rnd, kind, payload):
    f = Frame(sid, rnd, kind, payload)
    assert Frame.from_bytes(f.to_bytes()) == f


def test_fifo_and_sessions():
    with connect(PartyTopology(0, (1,), SERVERS)) as mesh:
        for i in range(5):
            mesh.send(0, 100, Frame(1 + i % 2, i, FrameKind.CONTROL, bytes([i])))
        assert [mesh.recv(0, 100, 2).payload for _ in range(2)] == [b"\x01", b"\x03"]
        assert [mesh.recv(0, 100, 1).payload for _ in range(3)] == [b"\x00", b"\x02", b"\x04"]


def test_missing_link_and_closed_channel():
    with connect(PartyTopology(0, (1,), SERVERS)) as mesh:
        with pytest.raises(TransportError):
            mesh.send(1, 5, Frame(1, 0, 0))
        ch = mesh.channel(0, 100)
        with pytest.raises(TransportError, match="timed out"):
            ch.recv(timeout=0.01)
        ch.close()
        with pytest.raises(TransportError):
            ch.send(Frame(1, 0, 0))
        with pytest.raises(TransportError):
            ch.recv()


def test_unknown_mode():
    with pytest.raises(ConfigError):
        connect(PartyTopology(0, (), SERVERS), mode="udp")


def test_tcp_loopback_1mib():
    payload = np.random.default_rng(0).integers(0, 256, 1 << 20, dtype=np.uint8).tobytes()
    with connect(PartyTopology(0, (1,), SERVERS), mode="tcp") as mesh:
        mesh.send(1, 100, Frame(9, 1, FrameKind.ECHO, payload))
        got = mesh.recv(1, 100)
        mesh.send(100, 1, got)
        back = mesh.recv(100, 1)
    assert back.payload == payload and back.session_id == 9


def test_tcp_sessions_interleave():
    with connect(PartyTopology(0, (), SERVERS), mode="tcp") as mesh:
        for i in range(6):
            mesh.send(100, 101, Frame(1 + i % 2, i, FrameKind.CONTROL, bytes([i])))
        assert [mesh.recv(100, 101, 2).payload[0] for _ in range(3)] == [1, 3, 5]
        assert [mesh.recv(100, 101, 1).payload[0] for _ in range(3)] == [0, 2, 4]


def test_metrics_local_op_sends_nothing(rng):
    with connect(PartyTopology(0, (), SERVERS)) as mesh:
        ctx = SecureContext(mesh, ZeroSharer.from_seed(0))
        x = ctx.input(0, np.arange(4, dtype=np.uint64), rng)
        before = dict(mesh.metrics.frames_sent)
        sec_add(x, x)
        assert dict(mesh.metrics.frames_sent) == before
        snap = mesh.metrics.snapshot()
        assert snap["total_bytes"] > 0 and snap["rounds_per_session"][ctx.session_id] == 1


def test_phase_timing():
    with connect(PartyTopology(0, (), SERVERS)) as mesh:
        with mesh.phase("a"):
            pass
        with mesh.phase("a"):
            pass
        assert "a" in mesh.metrics.phase_seconds


def test_audit_flags_plaintext_and_gradients():
    topo = PartyTopology(0, (1,), SERVERS)
    audit = FlowAudit(topo)
    X = np.random.default_rng(0).normal(size=(20, 2))
    g = np.linspace(-1, 1, 20)
    audit.register_features(X)
    audit.register_secret(g)
    with connect(topo, audit=audit) as mesh:
        mesh.send(1, 100, Frame(1, 0, FrameKind.CONTROL, b"pad" + np.ascontiguousarray(X[:, 1]).tobytes()))
        mesh.send(0, 1, Frame(1, 0, FrameKind.SHARE_GRAD, b""))
        mesh.send(0, 1, Frame(1, 1, FrameKind.CONTROL, g.tobytes()))
        mesh.send(100, 0, Frame(1, 0, FrameKind.SHARE_FEATURE, b""))
    assert audit.report() == {"plaintext_feature_to_server": 1, "label_or_gradient_to_passive": 2,
                              "unexpected_to_active": 1}
    assert not audit.clean
