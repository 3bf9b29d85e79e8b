"""Party topology and ordered, reliable message links.

Every link is a pair of FIFO channels.  Channels deliver length-prefixed
frames either through an in-process inbox or over a TCP socket; both paths
serialise the frame to its exact wire bytes so byte counters agree.

There is no TLS here: links are assumed to run inside an already secured
network, as the semi-honest model requires.
"""

from __future__ import annotations

import itertools
import socket
import struct
import threading
import time
from collections import defaultdict, deque
from contextlib import contextmanager
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable

import numpy as np

from .errors import ConfigError, TransportError

DEFAULT_TIMEOUT_S = 30.0

_LEN = struct.Struct("<I")
_HEADER = struct.Struct("<QIBI")  # session_id, round_no, kind, payload length


class FrameKind(IntEnum):
    CONTROL = 0
    SAMPLE_SPACE = 1
    SHARE_FEATURE = 2
    SHARE_GRAD = 3
    RESHARE = 4
    TRUNC = 5
    RESULT = 6
    SPLIT_REQUEST = 7
    LEFT_SET = 8
    PREDICT_QUERY = 9
    DIRECTION = 10
    SHARE_INPUT = 11
    PLAIN_FEATURE = 12
    PLAIN_LABEL = 13
    PLAIN_GRAD = 14
    ECHO = 15


@dataclass(frozen=True)
class Frame:
    session_id: int
    round_no: int
    kind: int
    payload: bytes = b""

    def to_bytes(self) -> bytes:
        n = len(self.payload)
        return b"".join((_LEN.pack(_HEADER.size + n), _HEADER.pack(self.session_id, self.round_no, int(self.kind), n),
                         self.payload))

    @classmethod
    def from_body(cls, body: bytes) -> "Frame":
        if len(body) < _HEADER.size:
            raise TransportError("truncated frame header")
        sid, rnd, kind, plen = _HEADER.unpack_from(body)
        payload = memoryview(body)[_HEADER.size:]
        if len(payload) != plen:
            raise TransportError(f"payload length prefix {plen} != actual {len(payload)}")
        return cls(sid, rnd, kind, bytes(payload))

    @classmethod
    def from_bytes(cls, data: bytes) -> "Frame":
        (n,) = _LEN.unpack_from(data)
        if len(data) != _LEN.size + n:
            raise TransportError("frame length prefix does not match buffer")
        return cls.from_body(memoryview(data)[_LEN.size:])

    @property
    def wire_size(self) -> int:
        return _LEN.size + _HEADER.size + len(self.payload)


FRAME_OVERHEAD = _LEN.size + _HEADER.size


# ---------------------------------------------------------------------------
# topology


@dataclass(frozen=True)
class PartyTopology:
    """Roles: one active party, passive data providers and three servers.

    Server ids may coincide with wind-farm ids; every other id is unique.
    """

    active: int
    passives: tuple[int, ...]
    servers: tuple[int, int, int]

    def __post_init__(self):
        object.__setattr__(self, "passives", tuple(self.passives))
        object.__setattr__(self, "servers", tuple(self.servers))
        if len(self.servers) != 3:
            raise ConfigError("exactly three compute servers are required")
        if len(set(self.servers)) != 3:
            raise ConfigError(f"duplicate server id in {self.servers}")
        providers = (self.active, *self.passives)
        if len(set(providers)) != len(providers):
            raise ConfigError(f"duplicate data-provider id in {providers}")

    @property
    def m(self) -> int:
        return 1 + len(self.passives)

    @property
    def providers(self) -> tuple[int, ...]:
        return (self.active, *self.passives)

    @property
    def parties(self) -> tuple[int, ...]:
        return tuple(dict.fromkeys((*self.providers, *self.servers)))

    def links(self) -> set[tuple[int, int]]:
        """Undirected links: server mesh, provider-server stars, provider-active stars.

        A provider's star link to the active party includes the active party's
        own loopback lane, used for its plaintext-local steps.
        """
        out: set[tuple[int, int]] = set()
        for a, b in itertools.combinations(self.servers, 2):
            out.add(_edge(a, b))
        for p in self.providers:
            for s in self.servers:
                out.add(_edge(p, s))
            out.add(_edge(p, self.active))
        return out

    def role(self, pid: int) -> set[str]:
        roles = set()
        if pid == self.active:
            roles.add("active")
        if pid in self.passives:
            roles.add("passive")
        if pid in self.servers:
            roles.add("server")
        return roles

    def with_passives(self, passives: Iterable[int]) -> "PartyTopology":
        return PartyTopology(self.active, tuple(passives), self.servers)


def _edge(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a <= b else (b, a)


# ---------------------------------------------------------------------------
# channels


class _Inbox:
    """Per-session FIFO queues behind one condition variable."""

    def __init__(self):
        self._queues: dict[int, deque] = defaultdict(deque)
        self._cond = threading.Condition()
        self.closed = False
        self.error: Exception | None = None

    def put(self, frame: Frame) -> None:
        with self._cond:
            self._queues[frame.session_id].append(frame)
            self._cond.notify_all()

    def close(self, error: Exception | None = None) -> None:
        with self._cond:
            self.closed = True
            self.error = error
            self._cond.notify_all()

    def get(self, session_id: int | None, timeout: float) -> Frame:
        deadline = time.monotonic() + timeout
        with self._cond:
            while True:
                if session_id is None:
                    for q in self._queues.values():
                        if q:
                            return q.popleft()
                else:
                    q = self._queues.get(session_id)
                    if q:
                        return q.popleft()
                if self.closed:
                    raise TransportError(f"channel closed{': ' + str(self.error) if self.error else ''}")
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise TransportError("receive timed out")
                self._cond.wait(remaining)

    def pending(self) -> int:
        with self._cond:
            return sum(len(q) for q in self._queues.values())


class Channel:
    """One direction of a link, ``src -> dst``; FIFO and exactly-once."""

    def __init__(self, src: int, dst: int, mesh: "Mesh | None" = None, timeout: float = DEFAULT_TIMEOUT_S):
        self.src = src
        self.dst = dst
        self.mesh = mesh
        self.timeout = timeout
        self.inbox = _Inbox()
        self.closed = False

    def _transmit(self, data: bytes) -> None:
        self.inbox.put(Frame.from_bytes(data))

    def send(self, frame: Frame) -> None:
        if self.closed:
            raise TransportError(f"send on closed channel {self.src}->{self.dst}")
        data = frame.to_bytes()
        if self.mesh is not None:
            self.mesh._observe(self, frame, len(data))
        self._transmit(data)

    def recv(self, session_id: int | None = None, timeout: float | None = None) -> Frame:
        try:
            return self.inbox.get(session_id, self.timeout if timeout is None else timeout)
        except TransportError as exc:
            raise TransportError(f"{self.src}->{self.dst}: {exc}") from None

    def close(self) -> None:
        self.closed = True
        self.inbox.close()


class TcpChannel(Channel):
    """Channel over a connected socket; a reader thread fills the inbox."""

    def __init__(self, src, dst, send_sock: socket.socket, recv_sock: socket.socket, mesh=None,
                 timeout: float = DEFAULT_TIMEOUT_S):
        super().__init__(src, dst, mesh, timeout)
        self._send_sock = send_sock
        self._recv_sock = recv_sock
        self._reader = threading.Thread(target=self._read_loop, daemon=True, name=f"tcp-{src}->{dst}")
        self._reader.start()

    def _transmit(self, data: bytes) -> None:
        try:
            self._send_sock.sendall(data)
        except OSError as exc:
            raise TransportError(f"{self.src}->{self.dst}: {exc}") from None

    def _read_exact(self, n: int) -> bytes:
        buf = bytearray()
        while len(buf) < n:
            chunk = self._recv_sock.recv(min(1 << 20, n - len(buf)))
            if not chunk:
                raise TransportError("peer closed connection")
            buf += chunk
        return bytes(buf)

    def _read_loop(self) -> None:
        try:
            while True:
                (n,) = _LEN.unpack(self._read_exact(_LEN.size))
                self.inbox.put(Frame.from_body(self._read_exact(n)))
        except (TransportError, OSError) as exc:
            self.inbox.close(None if self.closed else exc)

    def close(self) -> None:
        self.closed = True
        for s in (self._send_sock, self._recv_sock):
            try:
                s.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            s.close()
        self.inbox.close()


# ---------------------------------------------------------------------------
# audit


@dataclass
class FlowAudit:
    """Frame-kind and content audit of the information-flow contract.

    Registered plaintext columns are searched for verbatim (as float64 and as
    fixed-point ring words) inside payloads crossing the audited boundaries.
    """

    topology: PartyTopology
    counters: dict[str, int] = field(default_factory=lambda: {
        "plaintext_feature_to_server": 0,
        "label_or_gradient_to_passive": 0,
        "unexpected_to_active": 0,
    })
    _features: list[bytes] = field(default_factory=list)
    _secrets: list[bytes] = field(default_factory=list)
    frames_checked: int = 0

    @staticmethod
    def _patterns(column: np.ndarray) -> list[bytes]:
        col = np.ascontiguousarray(column, dtype="<f8")
        out = [col.tobytes()]
        if col.size >= 8:
            out.append(col[:8].tobytes())
        scaled = np.round(col * (1 << 20)).astype("<i8")
        if np.any(scaled != 0):
            out.append(scaled.tobytes())
        return [p for p in out if p.strip(b"\x00")]

    def register_features(self, X: np.ndarray) -> None:
        for j in range(X.shape[1]):
            self._features.extend(self._patterns(X[:, j]))

    def register_secret(self, vector: np.ndarray) -> None:
        self._secrets.extend(self._patterns(np.ravel(vector)))

    def inspect(self, src: int, dst: int, frame: Frame) -> None:
        self.frames_checked += 1
        topo = self.topology
        kind = frame.kind
        dst_roles = topo.role(dst)
        src_roles = topo.role(src)
        if "server" in dst_roles and src != dst and ("active" in src_roles or "passive" in src_roles):
            if kind in (FrameKind.PLAIN_FEATURE, FrameKind.PLAIN_LABEL, FrameKind.PLAIN_GRAD) or any(
                p in frame.payload for p in self._features
            ):
                self.counters["plaintext_feature_to_server"] += 1
        if dst_roles == {"passive"}:
            if kind in (FrameKind.PLAIN_LABEL, FrameKind.PLAIN_GRAD, FrameKind.SHARE_GRAD) or any(
                p in frame.payload for p in self._secrets
            ):
                self.counters["label_or_gradient_to_passive"] += 1
        if dst == topo.active and src != dst:
            allowed = {FrameKind.RESULT, FrameKind.LEFT_SET, FrameKind.DIRECTION, FrameKind.CONTROL, FrameKind.ECHO}
            if kind not in allowed:
                self.counters["unexpected_to_active"] += 1

    def report(self) -> dict[str, int]:
        return dict(self.counters)

    @property
    def clean(self) -> bool:
        return all(v == 0 for v in self.counters.values())


# ---------------------------------------------------------------------------
# mesh


@dataclass
class MeshMetrics:
    bytes_sent: dict[tuple[int, int], int] = field(default_factory=lambda: defaultdict(int))
    frames_sent: dict[tuple[int, int], int] = field(default_factory=lambda: defaultdict(int))
    session_rounds: dict[int, set] = field(default_factory=lambda: defaultdict(set))
    session_frames: dict[int, list] = field(default_factory=lambda: defaultdict(list))
    phase_seconds: dict[str, float] = field(default_factory=lambda: defaultdict(float))

    def snapshot(self) -> dict:
        return {
            "bytes_sent": {f"{a}->{b}": v for (a, b), v in sorted(self.bytes_sent.items())},
            "frames_sent": {f"{a}->{b}": v for (a, b), v in sorted(self.frames_sent.items())},
            "rounds_per_session": {sid: len(r) for sid, r in sorted(self.session_rounds.items())},
            "phase_seconds": dict(self.phase_seconds),
            "total_bytes": int(sum(self.bytes_sent.values())),
        }


class Mesh:
    """All channels of one topology plus metrics and an optional audit."""

    def __init__(self, topology: PartyTopology, mode: str = "inprocess", timeout: float = DEFAULT_TIMEOUT_S,
                 audit: FlowAudit | None = None, record_sessions: bool = True):
        self.topology = topology
        self.mode = mode
        self.timeout = timeout
        self.audit = audit
        self.metrics = MeshMetrics()
        self.record_sessions = record_sessions
        self.channels: dict[tuple[int, int], Channel] = {}
        self._session_ids = itertools.count(1)
        self._lock = threading.Lock()
        self._listeners: list[socket.socket] = []

    @property
    def links(self) -> set[tuple[int, int]]:
        return self.topology.links()

    def new_session(self) -> int:
        with self._lock:
            return next(self._session_ids)

    def channel(self, src: int, dst: int) -> Channel:
        try:
            return self.channels[(src, dst)]
        except KeyError:
            raise TransportError(f"no link between party {src} and party {dst}") from None

    def send(self, src: int, dst: int, frame: Frame) -> None:
        self.channel(src, dst).send(frame)

    def recv(self, src: int, dst: int, session_id: int | None = None) -> Frame:
        return self.channel(src, dst).recv(session_id)

    def _observe(self, ch: Channel, frame: Frame, nbytes: int) -> None:
        with self._lock:
            key = (ch.src, ch.dst)
            self.metrics.bytes_sent[key] += nbytes
            self.metrics.frames_sent[key] += 1
            if self.record_sessions:
                self.metrics.session_rounds[frame.session_id].add(frame.round_no)
                self.metrics.session_frames[frame.session_id].append(
                    (ch.src, ch.dst, frame.round_no, int(frame.kind), len(frame.payload))
                )
        if self.audit is not None:
            self.audit.inspect(ch.src, ch.dst, frame)

    @contextmanager
    def phase(self, name: str):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.metrics.phase_seconds[name] += time.perf_counter() - t0

    def session_frames(self, session_id: int) -> list[tuple]:
        return list(self.metrics.session_frames.get(session_id, []))

    def close(self) -> None:
        for ch in self.channels.values():
            ch.close()
        for s in self._listeners:
            s.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def connect(topology: PartyTopology, mode: str = "inprocess", addresses: dict[int, tuple[str, int]] | None = None,
            timeout: float = DEFAULT_TIMEOUT_S, audit: FlowAudit | None = None) -> Mesh:
    """Build the channel mesh for ``topology``.

    ``tcp`` mode opens one listener per party (``addresses`` or ephemeral
    loopback ports) and one socket pair per link direction.
    """
    mesh = Mesh(topology, mode, timeout, audit)
    links = topology.links()
    if mode == "inprocess":
        for a, b in links:
            mesh.channels[(a, b)] = Channel(a, b, mesh, timeout)
            if a != b:
                mesh.channels[(b, a)] = Channel(b, a, mesh, timeout)
        return mesh
    if mode != "tcp":
        raise ConfigError(f"unknown transport mode {mode!r}")
    listeners: dict[int, socket.socket] = {}
    bound: dict[int, tuple[str, int]] = {}
    try:
        for pid in topology.parties:
            host, port = (addresses or {}).get(pid, ("127.0.0.1", 0))
            srv = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
            srv.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
            srv.bind((host, port))
            srv.listen(64)
            listeners[pid] = srv
            bound[pid] = srv.getsockname()
        mesh._listeners = list(listeners.values())
        for a, b in sorted(links):
            for src, dst in {(a, b), (b, a)}:
                out = socket.create_connection(bound[dst], timeout=timeout)
                inc, _ = listeners[dst].accept()
                for s in (out, inc):
                    s.settimeout(None)
                    s.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
                mesh.channels[(src, dst)] = TcpChannel(src, dst, out, inc, mesh, timeout)
    except OSError as exc:
        mesh.close()
        raise TransportError(f"tcp connect failed: {exc}") from None
    return mesh
