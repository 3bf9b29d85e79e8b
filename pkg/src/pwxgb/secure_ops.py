"""Three-server protocols on replicated shares.

Each function is written SPMD-style: a list comprehension over the three
servers runs every server's local step on that server's view only, and
``SecureContext.exchange`` moves the words each server must send through
the mesh.  Frames are tagged with the context's session id and a strictly
increasing round number; a receiver that sees any other round aborts.

Round costs (resharing rounds, as counted by the transport):

=================  =======
add / sub / neg    0
mul (raw)          1
mul (truncated)    2
msb / lt           10
eq_const           16
recip (n iters)    4n
=================  =======
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import RangeError, ShapeError, TransportError
from .net import Frame, FrameKind, Mesh
from .ring import DEFAULT_CODEC, FixedCodec, as_words
from .sharing import (
    N_SERVERS,
    ShareTensor,
    WordKind,
    ZeroSharer,
    decode_share_frame,
    encode_share_frame,
    public_share,
    reveal,
)

ONES = np.uint64(0xFFFFFFFFFFFFFFFF)


@dataclass(frozen=True)
class Shared:
    """Handle on a value secret-shared among the three servers (one view each)."""

    views: tuple[ShareTensor, ShareTensor, ShareTensor]

    def __post_init__(self):
        object.__setattr__(self, "views", tuple(self.views))
        if len(self.views) != N_SERVERS or [v.server for v in self.views] != [0, 1, 2]:
            raise ValueError("need exactly one view per server, in server order")
        shapes = {v.shape for v in self.views}
        if len(shapes) != 1:
            raise ShapeError(f"server views disagree on shape: {shapes}")

    @property
    def shape(self) -> tuple:
        return self.views[0].shape

    @property
    def boolean(self) -> bool:
        return self.views[0].boolean

    def __getitem__(self, j: int) -> ShareTensor:
        return self.views[j]


def _local(fn: Callable[[ShareTensor], tuple[np.ndarray, np.ndarray]], *xs: Shared, boolean=None) -> Shared:
    out = []
    for j in range(N_SERVERS):
        lo, hi = fn(*(x[j] for x in xs))
        b = xs[0].boolean if boolean is None else boolean
        out.append(ShareTensor(j, np.asarray(lo, dtype=np.uint64), np.asarray(hi, dtype=np.uint64), b))
    return Shared(tuple(out))


def _check_same_shape(x: Shared, y: Shared) -> None:
    if x.shape != y.shape:
        raise ShapeError(f"shape mismatch: {x.shape} vs {y.shape}")


class SecureContext:
    """One protocol session among the three compute servers."""

    def __init__(self, mesh: Mesh, zero: ZeroSharer, codec: FixedCodec = DEFAULT_CODEC,
                 session_id: int | None = None):
        self.mesh = mesh
        self.topology = mesh.topology
        self.servers = mesh.topology.servers
        self.zero = zero
        self.codec = codec
        self.session_id = mesh.new_session() if session_id is None else session_id
        self.round_counter = 0
        self._tensor_ids = 0

    # -- plumbing ---------------------------------------------------------

    def fork(self) -> "SecureContext":
        """A fresh session on the same mesh and randomness (sequential reuse)."""
        return SecureContext(self.mesh, self.zero, self.codec)

    def _next_tensor_id(self) -> int:
        self._tensor_ids += 1
        return self._tensor_ids

    def _next_round(self) -> int:
        r = self.round_counter
        self.round_counter += 1
        return r

    def _recv_checked(self, src: int, dst: int, round_no: int, kind: FrameKind) -> Frame:
        frame = self.mesh.recv(src, dst, self.session_id)
        if frame.round_no != round_no or frame.kind != kind:
            raise TransportError(
                f"lockstep violation in session {self.session_id}: expected round {round_no} "
                f"kind {kind.name}, got round {frame.round_no} kind {frame.kind}"
            )
        return frame

    def exchange(self, words: Sequence[np.ndarray], boolean: bool = False, kind: FrameKind = FrameKind.RESHARE,
                 shift: int = -1) -> list[np.ndarray]:
        """Server j sends ``words[j]`` to server j+shift; returns each server's receipt."""
        rnd = self._next_round()
        wk = WordKind.BOOL_SINGLE if boolean else WordKind.ARITH_SINGLE
        tid = self._next_tensor_id()
        for j in range(N_SERVERS):
            payload = encode_share_frame(tid, wk, [words[j]])
            self.mesh.send(self.servers[j], self.servers[(j + shift) % 3],
                           Frame(self.session_id, rnd, kind, payload))
        received = []
        for j in range(N_SERVERS):
            frame = self._recv_checked(self.servers[(j - shift) % 3], self.servers[j], rnd, kind)
            _, _, (w,) = decode_share_frame(frame.payload)
            received.append(w.reshape(np.shape(words[(j - shift) % 3])))
        return received

    def send_one(self, src: int, dst: int, words: np.ndarray, kind: FrameKind = FrameKind.TRUNC) -> np.ndarray:
        """A single server-to-server transfer forming its own round."""
        rnd = self._next_round()
        payload = encode_share_frame(self._next_tensor_id(), WordKind.ARITH_SINGLE, [words])
        self.mesh.send(self.servers[src], self.servers[dst], Frame(self.session_id, rnd, kind, payload))
        frame = self._recv_checked(self.servers[src], self.servers[dst], rnd, kind)
        _, _, (w,) = decode_share_frame(frame.payload)
        return w.reshape(np.shape(words))

    def message(self, src: int, dst: int, kind: FrameKind, payload: bytes) -> bytes:
        """A plaintext control message between two parties, in its own round."""
        rnd = self._next_round()
        self.mesh.send(src, dst, Frame(self.session_id, rnd, kind, payload))
        return self._recv_checked(src, dst, rnd, kind).payload

    # -- input / output ---------------------------------------------------

    def input(self, owner: int, words, rng: np.random.Generator, kind: FrameKind = FrameKind.SHARE_INPUT,
              boolean: bool = False) -> Shared:
        """``owner`` shares ring words and ships each server its pair."""
        from .sharing import share, share_bool

        words = np.asarray(as_words(words), dtype=np.uint64)
        views = share_bool(words, rng) if boolean else share(words, rng)
        return self.distribute(owner, views, kind)

    def distribute(self, owner: int, views: Sequence[ShareTensor], kind: FrameKind = FrameKind.SHARE_INPUT) -> Shared:
        shape = views[0].shape
        boolean = views[0].boolean
        wk = WordKind.BOOL_PAIR if boolean else WordKind.ARITH_PAIR
        tid = self._next_tensor_id()
        rnd = self._next_round()
        for j, v in enumerate(views):
            payload = encode_share_frame(tid, wk, [v.lo, v.hi])
            self.mesh.send(owner, self.servers[j], Frame(self.session_id, rnd, kind, payload))
        got = []
        for j in range(N_SERVERS):
            frame = self._recv_checked(owner, self.servers[j], rnd, kind)
            _, _, (lo, hi) = decode_share_frame(frame.payload)
            got.append(ShareTensor(j, lo.reshape(shape), hi.reshape(shape), boolean))
        return Shared(tuple(got))

    def input_fixed(self, owner: int, reals, rng: np.random.Generator) -> Shared:
        return self.input(owner, self.codec.encode(reals), rng)

    def reveal_to(self, recipient: int, x: Shared, kind: FrameKind = FrameKind.RESULT) -> np.ndarray:
        """Every server sends its pair to ``recipient``, who checks and reconstructs."""
        wk = WordKind.BOOL_PAIR if x.boolean else WordKind.ARITH_PAIR
        tid = self._next_tensor_id()
        rnd = self._next_round()
        for j in range(N_SERVERS):
            payload = encode_share_frame(tid, wk, [x[j].lo, x[j].hi])
            self.mesh.send(self.servers[j], recipient, Frame(self.session_id, rnd, kind, payload))
        views = []
        for j in range(N_SERVERS):
            frame = self._recv_checked(self.servers[j], recipient, rnd, kind)
            _, _, (lo, hi) = decode_share_frame(frame.payload)
            views.append(ShareTensor(j, lo.reshape(x.shape), hi.reshape(x.shape), x.boolean))
        return reveal(views)

    def reveal_fixed(self, recipient: int, x: Shared):
        return self.codec.decode(self.reveal_to(recipient, x))

    def public(self, words, boolean: bool = False) -> Shared:
        return Shared(tuple(public_share(words, boolean)))


# ---------------------------------------------------------------------------
# linear (local) operations


def sec_add(x: Shared, y: Shared) -> Shared:
    _check_same_shape(x, y)
    with np.errstate(over="ignore"):
        return _local(lambda a, b: (a.lo + b.lo, a.hi + b.hi), x, y)


def sec_neg(x: Shared) -> Shared:
    with np.errstate(over="ignore"):
        return _local(lambda a: (np.uint64(0) - a.lo, np.uint64(0) - a.hi), x)


def sec_sub(x: Shared, y: Shared) -> Shared:
    _check_same_shape(x, y)
    return sec_add(x, sec_neg(y))


def add_public(x: Shared, c) -> Shared:
    """Add public ring words to component x_0 (held by servers 0 and 2)."""
    c = np.asarray(as_words(c), dtype=np.uint64)

    def step(a: ShareTensor):
        with np.errstate(over="ignore"):
            if a.server == 0:
                return a.lo + c, a.hi + np.zeros_like(c)
            if a.server == 2:
                return a.lo + np.zeros_like(c), a.hi + c
            return a.lo + np.zeros_like(c), a.hi + np.zeros_like(c)

    return _local(step, x)


def mul_public(x: Shared, c) -> Shared:
    """Multiply by public integer ring words (no rescaling)."""
    c = np.asarray(as_words(c), dtype=np.uint64)
    with np.errstate(over="ignore"):
        return _local(lambda a: (a.lo * c, a.hi * c), x)


# ---------------------------------------------------------------------------
# multiplication and truncation


def _cross_terms(a: ShareTensor, b: ShareTensor, matmul: bool) -> np.ndarray:
    with np.errstate(over="ignore"):
        if matmul:
            return a.lo @ b.lo + a.lo @ b.hi + a.hi @ b.lo
        return a.lo * b.lo + a.lo * b.hi + a.hi * b.lo


def sec_mul(ctx: SecureContext, x: Shared, y: Shared, truncate: bool = True, matmul: bool = False) -> Shared:
    """Replicated multiplication: local cross terms masked by zero-sharing, then one reshare.

    With ``truncate`` the product is rescaled by ``frac_bits`` (one extra
    round).  ``matmul`` treats the operands as matrices.
    """
    if matmul:
        if len(x.shape) != 2 or len(y.shape) != 2 or x.shape[1] != y.shape[0]:
            raise ShapeError(f"inner dimensions differ: {x.shape} @ {y.shape}")
        out_shape = (x.shape[0], y.shape[1])
    else:
        _check_same_shape(x, y)
        out_shape = x.shape
    z = []
    for j in range(N_SERVERS):
        alpha = ctx.zero.view(j).alpha(out_shape)
        with np.errstate(over="ignore"):
            z.append(_cross_terms(x[j], y[j], matmul) + alpha)
    # server j+1 hands z_{j+1} to server j
    recv = ctx.exchange(z, shift=-1)
    prod = Shared(tuple(ShareTensor(j, z[j], recv[j]) for j in range(N_SERVERS)))
    if truncate:
        return sec_truncate(ctx, prod, ctx.codec.frac_bits)
    return prod


def sec_truncate(ctx: SecureContext, x: Shared, bits: int) -> Shared:
    """Probabilistic truncation by ``bits``.

    The replicated sharing is viewed as a two-party sharing ``a = x_0 + x_1``
    (server 0) and ``b = x_2`` (servers 1 and 2); both halves are shifted
    locally, then server 0 re-randomises its half with randomness shared with
    server 2 and sends the remainder to server 1.  The result is within one
    unit of ``x / 2^bits`` unless ``a + b`` wraps as signed integers, which
    happens with probability about ``|x| / 2^63``.
    """
    if bits == 0:
        return x
    d = np.int64(bits)
    views = x.views
    shape = x.shape
    with np.errstate(over="ignore"):
        a = views[0].lo + views[0].hi
        t_a = (a.view(np.int64) >> d).view(np.uint64)
        neg_b1 = (np.uint64(0) - views[1].hi).view(np.int64)
        neg_b2 = (np.uint64(0) - views[2].lo).view(np.int64)
        t_b1 = np.uint64(0) - (neg_b1 >> d).view(np.uint64)
        t_b2 = np.uint64(0) - (neg_b2 >> d).view(np.uint64)
    r0 = ctx.zero.view(0).with_prev(shape)  # seed shared by servers 2 and 0
    r2 = ctx.zero.view(2).with_next(shape)
    ctx.zero.view(1).skip()
    with np.errstate(over="ignore"):
        w1 = t_a - r0
    w1_at_1 = ctx.send_one(0, 1, w1, kind=FrameKind.TRUNC)
    return Shared((
        ShareTensor(0, r0, w1),
        ShareTensor(1, w1_at_1, t_b1),
        ShareTensor(2, t_b2, r2),
    ))


# ---------------------------------------------------------------------------
# boolean circuits on XOR-shared 64-bit words


def _xor(x: Shared, y: Shared) -> Shared:
    return _local(lambda a, b: (a.lo ^ b.lo, a.hi ^ b.hi), x, y)


def _shl(x: Shared, k: int) -> Shared:
    s = np.uint64(k)
    return _local(lambda a: (a.lo << s, a.hi << s), x)


def _shr(x: Shared, k: int) -> Shared:
    s = np.uint64(k)
    return _local(lambda a: (a.lo >> s, a.hi >> s), x)


def _not(x: Shared) -> Shared:
    def step(a: ShareTensor):
        if a.server == 0:
            return a.lo ^ ONES, a.hi
        if a.server == 2:
            return a.lo, a.hi ^ ONES
        return a.lo, a.hi

    return _local(step, x)


def _and_many(ctx: SecureContext, pairs: Sequence[tuple[Shared, Shared]]) -> list[Shared]:
    """Several AND gates evaluated in one communication round."""
    shapes = [p[0].shape for p in pairs]
    sizes = [int(np.prod(s, dtype=np.int64)) for s in shapes]
    z = []
    for j in range(N_SERVERS):
        parts = []
        for x, y in pairs:
            a, b = x[j], y[j]
            parts.append(np.ravel((a.lo & b.lo) ^ (a.lo & b.hi) ^ (a.hi & b.lo)))
        flat = np.concatenate(parts) if parts else np.zeros(0, dtype=np.uint64)
        z.append(flat ^ ctx.zero.view(j).beta(flat.shape))
    recv = ctx.exchange(z, boolean=True, shift=-1)
    out = []
    offset = 0
    for shape, n in zip(shapes, sizes):
        views = tuple(
            ShareTensor(j, z[j][offset:offset + n].reshape(shape), recv[j][offset:offset + n].reshape(shape), True)
            for j in range(N_SERVERS)
        )
        out.append(Shared(views))
        offset += n
    return out


def _component_as_bool(x: Shared, idx: int) -> Shared:
    """Boolean sharing ``(.., x_idx, ..)`` of one additive component, built locally."""

    def step(a: ShareTensor):
        zero = np.zeros_like(a.lo)
        lo = a.lo if a.server == idx else zero
        hi = a.hi if (a.server + 1) % 3 == idx else zero
        return lo, hi

    return _local(step, x, boolean=True)


def a2b(ctx: SecureContext, x: Shared) -> Shared:
    """Arithmetic-to-boolean conversion: XOR shares of the 64-bit word.

    The three additive components are summed by a carry-save layer followed
    by a Kogge-Stone parallel-prefix adder (1 + 1 + 6 AND rounds).
    """
    p, q, r = (_component_as_bool(x, i) for i in range(3))
    # carry-save: s = p^q^r, carry = maj(p, q, r)
    pr = _xor(p, r)
    qr = _xor(q, r)
    (m,) = _and_many(ctx, [(pr, qr)])
    carry = _xor(m, r)
    s = _xor(pr, q)
    c = _shl(carry, 1)
    (g,) = _and_many(ctx, [(s, c)])
    prop = _xor(s, c)
    p_run = prop
    k = 1
    while k < 64:
        if k < 32:
            gk, pk = _and_many(ctx, [(p_run, _shl(g, k)), (p_run, _shl(p_run, k))])
            p_run = pk
        else:
            (gk,) = _and_many(ctx, [(p_run, _shl(g, k))])
        g = _xor(g, gk)
        k *= 2
    return _xor(prop, _shl(g, 1))


def b2a_bit(ctx: SecureContext, b: Shared) -> Shared:
    """Convert a boolean-shared bit (in bit 0) to an unscaled arithmetic 0/1."""
    one = np.uint64(1)
    bit = _local(lambda a: (a.lo & one, a.hi & one), b)

    def component(idx: int) -> Shared:
        def step(a: ShareTensor):
            zero = np.zeros_like(a.lo)
            lo = a.lo if a.server == idx else zero
            hi = a.hi if (a.server + 1) % 3 == idx else zero
            return lo, hi

        return _local(step, bit, boolean=False)

    u, v, w = component(0), component(1), component(2)
    # xor(u, v) = u + v - 2uv over the integers
    uv = sec_mul(ctx, u, v, truncate=False)
    t = sec_sub(sec_add(u, v), mul_public(uv, 2))
    tw = sec_mul(ctx, t, w, truncate=False)
    return sec_sub(sec_add(t, w), mul_public(tw, 2))


# ---------------------------------------------------------------------------
# comparison, equality, reciprocal, division


def sec_msb(ctx: SecureContext, x: Shared) -> Shared:
    """Arithmetic 0/1 sharing of the sign bit of ``x`` (exact)."""
    bits = a2b(ctx, x)
    return b2a_bit(ctx, _shr(bits, 63))


def sec_lt(ctx: SecureContext, x: Shared, y: Shared) -> Shared:
    return sec_msb(ctx, sec_sub(x, y))


def sec_eq_const(ctx: SecureContext, x: Shared, c) -> Shared:
    """Arithmetic 0/1 sharing of ``x == c`` for public integer ``c`` (broadcastable)."""
    c = np.broadcast_to(np.asarray(as_words(c), dtype=np.uint64), x.shape)
    d = add_public(x, np.uint64(0) - c)
    e = _not(a2b(ctx, d))
    k = 32
    while k >= 1:
        (e,) = _and_many(ctx, [(e, _shr(e, k))])
        k //= 2
    return b2a_bit(ctx, e)


def sec_recip(ctx: SecureContext, y: Shared, lo: float, hi: float, iters: int = 15) -> Shared:
    """Newton-Raphson reciprocal ``x <- x (2 - y x)`` from public start ``2 / (lo + hi)``."""
    if lo <= 0 or hi <= lo:
        raise RangeError(f"reciprocal range must satisfy 0 < lo < hi, got ({lo}, {hi})")
    codec = ctx.codec
    x = ctx.public(np.broadcast_to(codec.encode(2.0 / (lo + hi)), y.shape).copy())
    two = codec.encode(2.0)
    for _ in range(iters):
        t = sec_mul(ctx, y, x)
        u = add_public(sec_neg(t), np.broadcast_to(two, y.shape))
        x = sec_mul(ctx, x, u)
    return x


def sec_div(ctx: SecureContext, x: Shared, y: Shared, lo: float, hi: float, iters: int = 15) -> Shared:
    _check_same_shape(x, y)
    return sec_mul(ctx, x, sec_recip(ctx, y, lo, hi, iters))
