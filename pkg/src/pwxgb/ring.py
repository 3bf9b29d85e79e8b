"""Fixed-point reals embedded in the ring Z_{2^64}.

Ring words are numpy ``uint64``; numpy wraps on overflow for unsigned
integer arithmetic (including ``matmul``), which is exactly mod-2^64
semantics.  Scalars are accepted everywhere and come back as ``np.uint64``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import RangeError

RING_BITS = 64
MASK = (1 << RING_BITS) - 1
U64 = np.uint64


def as_words(values) -> np.ndarray:
    """Coerce Python ints (any sign, any size) or arrays into uint64 words."""
    if isinstance(values, np.ndarray):
        if values.dtype == np.uint64:
            return values
        if values.dtype.kind in "iu":
            return values.astype(np.int64).view(np.uint64) if values.dtype.kind == "i" else values.astype(np.uint64)
        raise TypeError(f"cannot interpret dtype {values.dtype} as ring words")
    if isinstance(values, (int, np.integer)):
        return np.uint64(int(values) & MASK)

    def wrap(v):
        if isinstance(v, (list, tuple)):
            return [wrap(u) for u in v]
        return int(v) & MASK

    return np.array(wrap(list(values)), dtype=np.uint64)


def to_signed(words) -> np.ndarray:
    """Two's-complement reinterpretation of ring words as int64."""
    w = np.asarray(words, dtype=np.uint64)
    return w.view(np.int64) if w.ndim else np.int64(w.view(np.int64))


def ring_add(a, b):
    with np.errstate(over="ignore"):
        return np.add(as_words(a), as_words(b), dtype=np.uint64)


def ring_sub(a, b):
    with np.errstate(over="ignore"):
        return np.subtract(as_words(a), as_words(b), dtype=np.uint64)


def ring_mul(a, b):
    with np.errstate(over="ignore"):
        return np.multiply(as_words(a), as_words(b), dtype=np.uint64)


def ring_neg(a):
    with np.errstate(over="ignore"):
        return np.subtract(np.uint64(0), as_words(a), dtype=np.uint64)


def _round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


@dataclass(frozen=True)
class FixedCodec:
    """Signed fixed-point codec with ``frac_bits`` fractional bits.

    ``encode`` rounds half away from zero so that oracle comparisons are
    deterministic; ``decode(encode(x)) == x`` holds on the dyadic grid
    ``k * 2**-frac_bits`` inside the representable band.
    """

    frac_bits: int = 20
    total_bits: int = RING_BITS

    def __post_init__(self):
        if self.total_bits != RING_BITS:
            raise ValueError("only the 64-bit ring is supported")
        if not 0 <= self.frac_bits < 62:
            raise ValueError("frac_bits must lie in [0, 62)")

    @property
    def scale(self) -> int:
        return 1 << self.frac_bits

    @property
    def bound(self) -> float:
        """Exclusive magnitude bound on encodable reals."""
        return float(2 ** (RING_BITS - 1 - self.frac_bits))

    @property
    def ulp(self) -> float:
        return 2.0 ** -self.frac_bits

    def encode(self, x):
        arr = np.asarray(x, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise RangeError("cannot encode non-finite values")
        if arr.size and np.max(np.abs(arr)) >= self.bound:
            raise RangeError(f"|x| must be below 2^{RING_BITS - 1 - self.frac_bits}")
        scaled = _round_half_away(arr * self.scale)
        if scaled.size and np.max(np.abs(scaled)) >= 2.0**63:
            raise RangeError("value rounds onto the ring boundary")
        ints = scaled.astype(np.int64)
        words = ints.view(np.uint64) if ints.ndim else np.uint64(ints.view(np.uint64))
        return words

    def decode(self, words):
        signed = to_signed(words)
        out = np.asarray(signed, dtype=np.float64) / self.scale
        return out if out.ndim else float(out)

    def quantize(self, x):
        """Round reals onto the codec grid (``decode(encode(x))``)."""
        return self.decode(self.encode(x))


DEFAULT_CODEC = FixedCodec()


def encode(x, frac_bits: int = 20):
    return FixedCodec(frac_bits).encode(x)


def decode(w, frac_bits: int = 20):
    return FixedCodec(frac_bits).decode(w)
