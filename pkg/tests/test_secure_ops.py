import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import chisquare

from pwxgb.errors import RangeError, ShapeError
from pwxgb.net import FRAME_OVERHEAD, FrameKind
from pwxgb.ring import DEFAULT_CODEC, as_words
from pwxgb.secure_ops import (
    sec_add,
    sec_div,
    sec_eq_const,
    sec_lt,
    sec_msb,
    sec_mul,
    sec_recip,
    sec_sub,
    sec_truncate,
)
from pwxgb.sharing import share_frame_header_size

from conftest import open_, share_in

C = DEFAULT_CODEC
ULP = 2.0**-20


def fx(ctx, vals, rng):
    return share_in(ctx, C.encode(np.atleast_1d(np.asarray(vals, dtype=float))), rng)


def val(ctx, x):
    return C.decode(open_(ctx, x))


def test_add_sub_examples(ctx, rng):
    assert val(ctx, sec_add(fx(ctx, 2.0, rng), fx(ctx, 3.0, rng))).tolist() == [5.0]
    assert val(ctx, sec_sub(fx(ctx, 1.0, rng), fx(ctx, 2.5, rng))).tolist() == [-1.5]
    x = fx(ctx, [1.25, -7.5], rng)
    assert val(ctx, sec_sub(x, x)).tolist() == [0.0, 0.0]
    assert val(ctx, sec_add(x, fx(ctx, [0.0, 0.0], rng))).tolist() == [1.25, -7.5]


def test_add_sub_oracle(ctx, rng):
    a = C.quantize(rng.uniform(-1000, 1000, 1000))
    b = C.quantize(rng.uniform(-1000, 1000, 1000))
    x, y = fx(ctx, a, rng), fx(ctx, b, rng)
    r0 = ctx.round_counter
    s, d = sec_add(x, y), sec_sub(x, y)
    assert ctx.round_counter == r0  # linear ops are local
    assert np.array_equal(val(ctx, s), a + b)
    assert np.array_equal(val(ctx, d), a - b)


def test_shape_mismatch(ctx, rng):
    with pytest.raises(ShapeError):
        sec_add(fx(ctx, [1.0, 2.0], rng), fx(ctx, [1.0], rng))
    with pytest.raises(ShapeError):
        sec_mul(ctx, share_in(ctx, np.zeros((2, 3), np.uint64), rng), share_in(ctx, np.zeros((2, 3), np.uint64), rng),
                matmul=True)


def test_mul_examples(ctx, rng):
    assert abs(val(ctx, sec_mul(ctx, fx(ctx, 2.0, rng), fx(ctx, 3.0, rng)))[0] - 6.0) <= ULP
    x = fx(ctx, [1.5, -2.25, 7.0], rng)
    assert np.all(np.abs(val(ctx, sec_mul(ctx, x, fx(ctx, [0.0] * 3, rng)))) <= ULP)
    assert np.all(np.abs(val(ctx, sec_mul(ctx, x, fx(ctx, [1.0] * 3, rng))) - [1.5, -2.25, 7.0]) <= ULP)


def test_mul_oracle(ctx, rng):
    a, b = C.quantize(rng.uniform(-8, 8, 10_000)), C.quantize(rng.uniform(-8, 8, 10_000))
    got = val(ctx, sec_mul(ctx, fx(ctx, a, rng), fx(ctx, b, rng)))
    assert np.max(np.abs(got - a * b)) <= ULP


def test_mul_matmul_untruncated(ctx, rng):
    A = rng.integers(0, 2, size=(6, 40)).astype(np.uint64)
    g = C.quantize(rng.normal(size=(40, 2)))
    out = sec_mul(ctx, share_in(ctx, A, rng), share_in(ctx, C.encode(g), rng), truncate=False, matmul=True)
    assert np.array_equal(val(ctx, out), A.astype(float) @ g)


def test_mul_round_and_frame_count(ctx, mesh, rng):
    n = 25
    x, y = fx(ctx, np.ones(n), rng), fx(ctx, np.ones(n), rng)
    r0 = ctx.round_counter
    start = len(mesh.session_frames(ctx.session_id))
    sec_mul(ctx, x, y, truncate=False)
    assert ctx.round_counter - r0 == 1
    frames = mesh.session_frames(ctx.session_id)[start:]
    assert len(frames) == 3
    assert {(f[0], f[1]) for f in frames} == {(101, 100), (102, 101), (100, 102)}
    assert all(f[3] == FrameKind.RESHARE and f[4] == 8 * n + share_frame_header_size() for f in frames)
    before = sum(mesh.metrics.bytes_sent.values())
    sec_mul(ctx, x, y, truncate=False)
    assert sum(mesh.metrics.bytes_sent.values()) - before == 3 * (8 * n + share_frame_header_size() + FRAME_OVERHEAD)
    r0 = ctx.round_counter
    sec_mul(ctx, x, y)
    assert ctx.round_counter - r0 == 2


def test_truncate(ctx, rng):
    v = rng.uniform(-1000, 1000, 100_000)
    words = C.encode(v * 2**20)  # value carried at scale 2^40
    got = val(ctx, sec_truncate(ctx, share_in(ctx, words, rng), 20))
    err = np.abs(got - C.quantize(v))
    wrapped = err > 1.0
    assert np.max(err[~wrapped]) <= ULP
    # a wrap is a full-ring offset; its rate is bounded by |x| / 2^63 per element
    assert np.allclose(err[wrapped], 2.0**24)
    expected = np.sum(np.abs(v) * 2.0**40 / 2.0**63)
    assert wrapped.sum() <= 3 * expected + 5
    zero = val(ctx, sec_truncate(ctx, fx(ctx, [0.0], rng), 20))
    assert abs(zero[0]) <= ULP


def test_msb_examples(ctx, rng):
    assert open_(ctx, sec_msb(ctx, fx(ctx, [-1.0, 1.0, 0.0], rng))).tolist() == [1, 0, 0]


def test_msb_oracle(ctx, rng):
    w = rng.integers(0, 2**64, size=10_000, dtype=np.uint64)
    w[:4] = [0, 2**63, 2**63 - 1, 2**64 - 1]
    x = share_in(ctx, w, rng)
    r0 = ctx.round_counter
    bit = sec_msb(ctx, x)
    assert ctx.round_counter - r0 == 10
    assert np.array_equal(open_(ctx, bit), w >> np.uint64(63))


def test_lt(ctx, rng):
    assert open_(ctx, sec_lt(ctx, fx(ctx, 1.0, rng), fx(ctx, 2.0, rng))).tolist() == [1]
    x = fx(ctx, [3.0, -2.0], rng)
    assert open_(ctx, sec_lt(ctx, x, x)).tolist() == [0, 0]
    a, b = C.quantize(rng.uniform(-100, 100, 10_000)), C.quantize(rng.uniform(-100, 100, 10_000))
    got = open_(ctx, sec_lt(ctx, fx(ctx, a, rng), fx(ctx, b, rng)))
    assert np.array_equal(got.astype(bool), a < b)


def test_eq_const(ctx, rng):
    assert open_(ctx, sec_eq_const(ctx, share_in(ctx, [3], rng), 3)).tolist() == [1]
    assert open_(ctx, sec_eq_const(ctx, share_in(ctx, [3], rng), 4)).tolist() == [0]
    bins = rng.integers(0, 8, size=(50, 4)).astype(np.uint64)
    x = share_in(ctx, bins, rng)
    for b in range(8):
        assert np.array_equal(open_(ctx, sec_eq_const(ctx, x, b)), (bins == b).astype(np.uint64))
    r = rng.integers(0, 2**64, size=10_000, dtype=np.uint64)
    c = r.copy()
    c[::2] += np.uint64(1)
    got = open_(ctx, sec_eq_const(ctx, share_in(ctx, r, rng), c))
    assert np.array_equal(got, (r == c).astype(np.uint64))


@pytest.mark.parametrize("y, lo, hi, want", [(1.0, 0.5, 2.0, 1.0), (4.0, 1.0, 8.0, 0.25), (0.5, 0.25, 1.0, 2.0)])
def test_recip_examples(ctx, rng, y, lo, hi, want):
    assert abs(val(ctx, sec_recip(ctx, fx(ctx, y, rng), lo, hi))[0] - want) <= 2.0**-16


def test_recip_band(ctx, rng):
    y = C.quantize(rng.uniform(0.25, 8, 2000))
    x = fx(ctx, y, rng)
    r0 = ctx.round_counter
    r = sec_recip(ctx, x, 0.25, 8, iters=15)
    assert ctx.round_counter - r0 == 60
    got = val(ctx, r)
    assert np.max(np.abs(got - 1 / y)) <= 2.0**-16


def test_recip_converges_monotonically(ctx, rng):
    y = C.quantize(rng.uniform(0.25, 8, 200))
    errs = [np.max(np.abs(val(ctx, sec_recip(ctx, fx(ctx, y, rng), 0.25, 8, iters=k)) - 1 / y)) for k in range(1, 13)]
    floor = 2.0**-16
    for a, b in zip(errs, errs[1:]):
        assert b <= a or b <= floor


def test_recip_range_check(ctx, rng):
    with pytest.raises(RangeError):
        sec_recip(ctx, fx(ctx, 1.0, rng), 0.0, 2.0)


def test_div(ctx, rng):
    assert abs(val(ctx, sec_div(ctx, fx(ctx, 6.0, rng), fx(ctx, 3.0, rng), 1, 8))[0] - 2.0) <= 2.0**-15
    assert abs(val(ctx, sec_div(ctx, fx(ctx, 0.0, rng), fx(ctx, 3.0, rng), 1, 8))[0]) <= 2.0**-15
    x = C.quantize(rng.uniform(-4, 4, 50))
    got = val(ctx, sec_div(ctx, fx(ctx, x, rng), fx(ctx, np.ones(50), rng), 0.5, 2))
    assert np.max(np.abs(got - x)) <= 2.0**-15


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-8, 8, allow_nan=False), min_size=1, max_size=30),
       st.lists(st.floats(-8, 8, allow_nan=False), min_size=1, max_size=30))
def test_mul_property(a, b):
    from pwxgb.net import PartyTopology, connect
    from pwxgb.secure_ops import SecureContext
    from pwxgb.sharing import ZeroSharer

    n = min(len(a), len(b))
    a, b = C.quantize(np.array(a[:n])), C.quantize(np.array(b[:n]))
    rng = np.random.default_rng(0)
    with connect(PartyTopology(0, (), (100, 101, 102))) as m:
        c = SecureContext(m, ZeroSharer.from_seed(1))
        got = C.decode(c.reveal_to(0, sec_mul(c, c.input(0, C.encode(a), rng), c.input(0, C.encode(b), rng))))
    assert np.max(np.abs(got - a * b)) <= ULP


def test_reshare_transcript_uniform(ctx, mesh, rng):
    """Words a server receives during sec_mul look uniform even for a fixed product."""
    n = 100_000
    x = fx(ctx, np.full(n, 1.5), rng)
    y = fx(ctx, np.full(n, -2.0), rng)
    captured = []
    orig = ctx.exchange

    def spy(words, *a, **k):
        out = orig(words, *a, **k)
        captured.append(out[0])
        return out

    ctx.exchange = spy
    sec_mul(ctx, x, y, truncate=False)
    counts = np.bincount((captured[0] >> np.uint64(56)).astype(np.int64), minlength=256)
    assert chisquare(counts).pvalue > 0.01
