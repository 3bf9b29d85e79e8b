"""2-out-of-3 replicated secret sharing over Z_{2^64}.

Server ``j`` (0-based) holds the pair ``(x_j, x_{j+1 mod 3})`` of the three
additive components.  The same layout is used for boolean (XOR) sharing of
64-bit words, which the comparison circuits rely on.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Mapping, Sequence

import numpy as np
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from .errors import FormatError, InconsistencyError, ShapeError
from .ring import as_words

N_SERVERS = 3


class WordKind(IntEnum):
    ARITH_SINGLE = 0
    ARITH_PAIR = 1
    BOOL_SINGLE = 2
    BOOL_PAIR = 3


@dataclass(frozen=True)
class ShareTensor:
    """One server's view of a shared matrix: its two replicated components."""

    server: int
    lo: np.ndarray
    hi: np.ndarray
    boolean: bool = False

    def __post_init__(self):
        if self.lo.shape != self.hi.shape:
            raise ShapeError(f"component shapes differ: {self.lo.shape} vs {self.hi.shape}")
        if self.lo.dtype != np.uint64 or self.hi.dtype != np.uint64:
            raise TypeError("share components must be uint64")
        if self.server not in range(N_SERVERS):
            raise ValueError("server index must be 0, 1 or 2")

    @property
    def shape(self) -> tuple:
        return self.lo.shape

    @property
    def pair(self) -> tuple[np.ndarray, np.ndarray]:
        return self.lo, self.hi

    def replace(self, lo, hi) -> "ShareTensor":
        return ShareTensor(self.server, lo, hi, self.boolean)


# a scalar replicated share is just a 0-d ShareTensor
ReplicatedShare = ShareTensor


def _split_additive(words: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, ...]:
    x0 = rng.integers(0, 2**64, size=words.shape, dtype=np.uint64, endpoint=False)
    x1 = rng.integers(0, 2**64, size=words.shape, dtype=np.uint64, endpoint=False)
    with np.errstate(over="ignore"):
        x2 = words - x0 - x1
    return x0, x1, x2


def share(x, rng: np.random.Generator) -> list[ShareTensor]:
    """Split ring words ``x`` into three replicated views (arithmetic)."""
    words = np.asarray(as_words(x), dtype=np.uint64)
    comps = _split_additive(words, rng)
    return [ShareTensor(j, comps[j], comps[(j + 1) % 3]) for j in range(N_SERVERS)]


def share_bool(x, rng: np.random.Generator) -> list[ShareTensor]:
    words = np.asarray(as_words(x), dtype=np.uint64)
    b0 = rng.integers(0, 2**64, size=words.shape, dtype=np.uint64, endpoint=False)
    b1 = rng.integers(0, 2**64, size=words.shape, dtype=np.uint64, endpoint=False)
    comps = (b0, b1, words ^ b0 ^ b1)
    return [ShareTensor(j, comps[j], comps[(j + 1) % 3], boolean=True) for j in range(N_SERVERS)]


def public_share(words, boolean: bool = False) -> list[ShareTensor]:
    """Trivial sharing ``(w, 0, 0)`` of a public value; needs no randomness."""
    w = np.asarray(as_words(words), dtype=np.uint64)
    z = np.zeros_like(w)
    comps = (w, z, z)
    return [ShareTensor(j, comps[j], comps[(j + 1) % 3], boolean) for j in range(N_SERVERS)]


def reveal(views: Sequence[ShareTensor] | Mapping[int, ShareTensor]) -> np.ndarray:
    """Reconstruct from any two or three servers' views.

    Overlapping components (server j's ``hi`` is server j+1's ``lo``) are
    compared word by word and any disagreement raises.
    """
    if isinstance(views, Mapping):
        by_server = dict(views)
    else:
        by_server = {v.server: v for v in views}
    if len(by_server) < 2:
        raise ValueError("reconstruction needs views from at least two servers")
    kinds = {v.boolean for v in by_server.values()}
    if len(kinds) != 1:
        raise ValueError("cannot mix boolean and arithmetic views")
    boolean = kinds.pop()
    comps: dict[int, np.ndarray] = {}
    for j, v in sorted(by_server.items()):
        for idx, word in ((j, v.lo), ((j + 1) % 3, v.hi)):
            if idx in comps:
                if comps[idx].shape != word.shape or not np.array_equal(comps[idx], word):
                    raise InconsistencyError(f"component x_{idx} disagrees between servers")
            else:
                comps[idx] = word
    c0, c1, c2 = comps[0], comps[1], comps[2]
    if boolean:
        return c0 ^ c1 ^ c2
    with np.errstate(over="ignore"):
        return c0 + c1 + c2


# ---------------------------------------------------------------------------
# correlated randomness


def prf_words(key: bytes, counter: int, n: int) -> np.ndarray:
    """AES-128 in counter mode; block ``counter`` selects a disjoint keystream."""
    if n == 0:
        return np.zeros(0, dtype=np.uint64)
    nonce = ((counter & ((1 << 64) - 1)) << 64).to_bytes(16, "big")
    enc = Cipher(algorithms.AES(key), modes.CTR(nonce)).encryptor()
    return np.frombuffer(enc.update(bytes(8 * n)), dtype="<u8").astype(np.uint64)


@dataclass
class ZeroSharerView:
    """Server ``j``'s local half of the zero-sharing setup.

    It knows ``seeds[j]`` (shared with server j+1) and ``seeds[j-1]``
    (shared with server j-1).  Every draw advances a private counter; servers
    stay in lockstep because they execute the same operation sequence.
    """

    server: int
    own_seed: bytes
    prev_seed: bytes
    counter: int = 0

    def _next(self) -> int:
        c = self.counter
        self.counter += 1
        return c

    def alpha(self, shape) -> np.ndarray:
        n = int(np.prod(shape, dtype=np.int64))
        c = self._next()
        with np.errstate(over="ignore"):
            a = prf_words(self.own_seed, c, n) - prf_words(self.prev_seed, c, n)
        return a.reshape(shape)

    def beta(self, shape) -> np.ndarray:
        n = int(np.prod(shape, dtype=np.int64))
        c = self._next()
        return (prf_words(self.own_seed, c, n) ^ prf_words(self.prev_seed, c, n)).reshape(shape)

    def with_prev(self, shape) -> np.ndarray:
        """Randomness common to this server and server j-1."""
        n = int(np.prod(shape, dtype=np.int64))
        return prf_words(self.prev_seed, self._next(), n).reshape(shape)

    def with_next(self, shape) -> np.ndarray:
        """Randomness common to this server and server j+1."""
        n = int(np.prod(shape, dtype=np.int64))
        return prf_words(self.own_seed, self._next(), n).reshape(shape)

    def skip(self) -> None:
        self._next()


@dataclass
class ZeroSharer:
    """Three pairwise PRF keys; seed ``j`` is known to servers j and j+1."""

    seeds: tuple[bytes, bytes, bytes]
    views: list[ZeroSharerView] = field(init=False)

    def __post_init__(self):
        if len(self.seeds) != 3 or any(len(s) != 16 for s in self.seeds):
            raise ValueError("need three 16-byte seeds")
        self.views = [
            ZeroSharerView(j, self.seeds[j], self.seeds[(j - 1) % 3]) for j in range(N_SERVERS)
        ]

    @classmethod
    def from_seed(cls, seed: int) -> "ZeroSharer":
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5EED]))
        return cls(tuple(rng.bytes(16) for _ in range(3)))

    def view(self, server: int) -> ZeroSharerView:
        return self.views[server]


def zero_share(z: ZeroSharer, shape=()) -> list[np.ndarray]:
    """Each server's alpha for the next counter; they sum to zero mod 2^64."""
    return [z.view(j).alpha(shape) for j in range(N_SERVERS)]


# ---------------------------------------------------------------------------
# wire layout: <u32 tensor-id, u32 rows, u32 cols, u8 word-kind> then u64 words

_SHARE_HEADER = struct.Struct("<IIIB")


def encode_share_frame(tensor_id: int, kind: WordKind, words: Sequence[np.ndarray]) -> bytes:
    first = np.asarray(words[0])
    rows, cols = _as_2d_shape(first.shape)
    expected = 2 if kind in (WordKind.ARITH_PAIR, WordKind.BOOL_PAIR) else 1
    if len(words) != expected:
        raise ShapeError(f"{kind.name} frames carry {expected} word(s) per element")
    buf = bytearray(_SHARE_HEADER.size + 8 * rows * cols * expected)
    _SHARE_HEADER.pack_into(buf, 0, tensor_id, rows, cols, int(kind))
    body = np.frombuffer(buf, dtype="<u8", offset=_SHARE_HEADER.size).reshape(rows * cols, expected)
    for i, w in enumerate(words):
        body[:, i] = np.ravel(w)
    return bytes(buf)


def decode_share_frame(payload: bytes) -> tuple[int, WordKind, list[np.ndarray]]:
    if len(payload) < _SHARE_HEADER.size:
        raise FormatError("share frame shorter than its header")
    tensor_id, rows, cols, kind = _SHARE_HEADER.unpack_from(payload)
    kind = WordKind(kind)
    per = 2 if kind in (WordKind.ARITH_PAIR, WordKind.BOOL_PAIR) else 1
    body = np.frombuffer(payload, dtype="<u8", offset=_SHARE_HEADER.size)
    if body.size != rows * cols * per:
        raise FormatError(f"share frame holds {body.size} words, header says {rows * cols * per}")
    body = body.astype(np.uint64)
    if per == 2:
        body = body.reshape(rows * cols, 2)
        return tensor_id, kind, [body[:, 0].reshape(rows, cols), body[:, 1].reshape(rows, cols)]
    return tensor_id, kind, [body.reshape(rows, cols)]


def share_frame_header_size() -> int:
    return _SHARE_HEADER.size


def _as_2d_shape(shape: tuple) -> tuple[int, int]:
    if len(shape) == 0:
        return 1, 1
    if len(shape) == 1:
        return shape[0], 1
    if len(shape) == 2:
        return shape
    raise ShapeError("share frames carry at most two dimensions")
