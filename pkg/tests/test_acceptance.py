"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v``; criteria 6 to 8 train
many models and take several minutes.
"""

import statistics
import time
import warnings

import numpy as np
from scipy.stats import chisquare

from pwxgb.baselines import ExperimentConfig, compare_baselines
from pwxgb.bench import BenchConfig, growth_exponent, non_decreasing, time_inference, time_training
from pwxgb.boost import BoostParams, gradients, oracle_predict, oracle_train, quantize_grads, split_gain
from pwxgb.data import synth_cluster
from pwxgb.federated import local_parties, predict, train
from pwxgb.mmd import DegenerateWarning, KernelSpec, mmd2, select_for_target
from pwxgb.net import FlowAudit, PartyTopology, connect
from pwxgb.ring import DEFAULT_CODEC
from pwxgb.secure_ops import SecureContext, sec_add, sec_eq_const, sec_lt, sec_msb, sec_mul, sec_recip, sec_sub
from pwxgb.sharing import ZeroSharer, reveal, share

C = DEFAULT_CODEC
TOPO = PartyTopology(0, (1, 2), (100, 101, 102))


def test_c01_share_round_trip(accept):
    rng = np.random.default_rng(1)
    x = C.quantize(rng.uniform(-(2.0**40), 2.0**40, 100_000))
    t0 = time.perf_counter()
    back = C.decode(reveal(share(C.encode(x), rng)))
    dt = time.perf_counter() - t0
    ok = np.array_equal(back, x) and dt < 10
    assert accept(1, ok, f"10^5 values exact={np.array_equal(back, x)} in {dt:.3f}s (< 10s)")


def test_c02_secure_op_suite(accept):
    rng = np.random.default_rng(2)
    t0 = time.perf_counter()
    with connect(TOPO) as mesh:
        ctx = SecureContext(mesh, ZeroSharer.from_seed(2))

        def fx(v):
            return ctx.input(0, C.encode(v), rng)

        def val(s):
            return C.decode(ctx.reveal_to(0, s))

        def bits(s):
            return ctx.reveal_to(0, s).astype(bool)

        a, b = C.quantize(rng.uniform(-8, 8, 10_000)), C.quantize(rng.uniform(-8, 8, 10_000))
        x, y = fx(a), fx(b)
        add_ok = np.array_equal(val(sec_add(x, y)), a + b) and np.array_equal(val(sec_sub(x, y)), a - b)
        mul_err = float(np.max(np.abs(val(sec_mul(ctx, x, y)) - a * b)))
        w = rng.integers(0, 2**64, size=10_000, dtype=np.uint64)
        msb_ok = np.array_equal(ctx.reveal_to(0, sec_msb(ctx, ctx.input(0, w, rng))), w >> np.uint64(63))
        lt_ok = np.array_equal(bits(sec_lt(ctx, x, y)), a < b)
        k = rng.integers(0, 16, 10_000).astype(np.uint64)
        c = rng.integers(0, 16, 10_000).astype(np.uint64)
        eq_ok = np.array_equal(bits(sec_eq_const(ctx, ctx.input(0, k, rng), c)), k == c)
        d = rng.uniform(0.25, 8, 10_000)
        recip_err = float(np.max(np.abs(val(sec_recip(ctx, fx(d), 0.25, 8, iters=15)) - 1 / d)))
    dt = time.perf_counter() - t0
    ok = add_ok and mul_err <= 2.0**-20 and msb_ok and lt_ok and eq_ok and recip_err <= 2.0**-16 and dt < 60
    assert accept(2, ok, f"add/sub={add_ok} mul_err={mul_err:.2e} msb={msb_ok} lt={lt_ok} eq={eq_ok} "
                         f"recip_err={recip_err:.2e} in {dt:.1f}s (< 60s)")


def _random_case(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(60, 401))
    widths = rng.integers(1, 9, size=3)
    parts = [rng.normal(size=(n + 100, w)) * rng.uniform(0.5, 5) for w in widths]
    y = sum(np.tanh(p[:, 0]) * rng.normal() for p in parts) + 0.1 * rng.normal(size=n + 100)
    params = BoostParams(n_trees=int(rng.integers(1, 11)), max_depth=int(rng.integers(1, 4)), n_bins=16)
    return [p[:n] for p in parts], y[:n], [p[n:] for p in parts], params


def test_c03_losslessness(accept):
    t0 = time.perf_counter()
    same, float_same, worst = 0, 0, 0.0
    for seed in range(20):
        tr, y, te, params = _random_case(seed)
        with connect(TOPO) as mesh:
            fm = train(mesh, local_parties(tr, TOPO), y, params, seed=seed)
            pred = predict(mesh, fm, local_parties(te, TOPO))
        model, stores = oracle_train(tr, y, params, party_ids=TOPO.providers, grad_codec=C)
        same += fm.model.split_tuples() == model.split_tuples()
        worst = max(worst, float(np.max(np.abs(pred - oracle_predict(model, stores, te)))))
        fmodel, _ = oracle_train(tr, y, params, party_ids=TOPO.providers)
        float_same += fm.model.split_tuples() == fmodel.split_tuples()
    dt = time.perf_counter() - t0
    ok = same == 20 and worst <= 1e-4 and dt < 600
    assert accept(3, ok, f"split tuples identical {same}/20, max |pred diff| {worst:.1e} (<= 1e-4), {dt:.0f}s; "
                         f"unquantized-oracle agreement {float_same}/20")


def test_c04_gain_identity(accept):
    rng = np.random.default_rng(4)
    parts = [rng.normal(size=(300, 4)) for _ in range(3)]
    y = parts[0][:, 0] * parts[1][:, 1] + np.sin(parts[2][:, 2])
    params = BoostParams(n_trees=5, max_depth=3, n_bins=16, gamma=0.01)
    with connect(TOPO) as mesh:
        fm = train(mesh, local_parties(parts, TOPO), y, params)
    model = fm.model
    yhat = np.full(len(y), model.base_score)
    worst, checked = 0.0, 0
    for t, tree in enumerate(model.trees):
        gp = quantize_grads(gradients(y, yhat), C)
        for rec in (r for r in model.trace if r.tree == t):
            v = split_gain(gp.g[rec.left].sum(), gp.h[rec.left].sum(), gp.g[rec.right].sum(), gp.h[rec.right].sum(),
                           params.reg_lambda, params.gamma)
            worst = max(worst, abs(v - rec.gain))
            checked += 1
        for leaf in tree.leaves():
            yhat[leaf.sample_space] += params.eta * leaf.leaf_weight
    ok = checked == len(model.split_tuples()) > 0 and worst <= 1e-12
    assert accept(4, ok, f"{checked} splits, max |gain - recomputed| {worst:.1e} (<= 1e-12)")


def test_c05_mmd_oracle(accept):
    rng = np.random.default_rng(5)
    k = KernelSpec(0.8)
    a, b = rng.random((30, 16)), rng.random((30, 16)) ** 2

    def K(x, z):
        return sum(np.exp(-np.sum((x - z) ** 2) / (2 * s * s)) for s in k.bandwidths)

    brute = (sum(K(p, q) for p in a for q in a) + sum(K(p, q) for p in b for q in b)
             - 2 * sum(K(p, q) for p in a for q in b)) / 900
    rel = abs(mmd2(a, b, k) - brute) / brute
    self_zero = mmd2(a, a, k) == 0
    closed = abs(mmd2([[0.0]], [[1.0]], KernelSpec(1.0, (1.0,))) - (2 - 2 * np.exp(-0.5)))
    ok = rel <= 1e-12 and self_zero and closed <= 1e-12
    assert accept(5, ok, f"brute-force rel err {rel:.1e}, mmd2(d,d)=0 {self_zero}, closed-form err {closed:.1e}")


def test_c06_selection(accept):
    hits = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateWarning)
        for seed in range(20):
            farms = synth_cluster(8, 60 * 96, 0.9, seed, n_correlated=5)
            _, peers = select_for_target(farms, 0, beta=0.85, seed=seed)
            hits.append(sorted(peers) == [1, 2, 3, 4])
    ok = sum(hits) >= 18
    assert accept(6, ok, f"exact correlated peer set in {sum(hits)}/20 seeds (>= 18)")


def test_c07_spatial_benefit(accept):
    cfg_models = ("Local_XGBoost", "pwXGBoost_wo_mmd", "pwXGBoost")
    local, dist, pw = [], [], []
    for seed in range(10):
        farms = synth_cluster(8, 60 * 96, 0.9, seed, n_correlated=5)
        r = compare_baselines(farms, 0, ExperimentConfig(seed=seed), models=cfg_models, horizons=(16,))
        local.append(r.rows["Local_XGBoost"][16][0])
        dist.append(r.rows["pwXGBoost_wo_mmd"][16][0])
        pw.append(r.rows["pwXGBoost"][16][0])
    wins = sum(p < l for p, l in zip(pw, local))
    gain = statistics.median(l - p for p, l in zip(pw, local))
    ok = wins == 10 and gain >= 0.3 and statistics.median(pw) <= statistics.median(dist)
    assert accept(7, ok, f"pw < local in {wins}/10 seeds, median improvement {gain:.2f}pp (>= 0.3), "
                         f"median RMSE pw {statistics.median(pw):.2f} vs distance {statistics.median(dist):.2f}")


def test_c08_scalability(accept):
    cfg = BenchConfig()
    rows = time_training(cfg)
    exponent = growth_exponent(time_inference(cfg))
    ok = non_decreasing(rows) and exponent < 1
    times = ", ".join(f"m={r.parties}:{r.seconds:.2f}s" for r in rows)
    assert accept(8, ok, f"training {times}; inference growth exponent {exponent:.2f} (< 1)")


def test_c09_information_flow(accept):
    rng = np.random.default_rng(9)
    parts = [rng.normal(size=(200, 4)) for _ in range(3)]
    y = parts[0][:, 0] + parts[1][:, 1] * parts[2][:, 2]
    audit = FlowAudit(TOPO)
    with connect(TOPO, audit=audit) as mesh:
        fm = train(mesh, local_parties(parts, TOPO), y, BoostParams(n_trees=3, max_depth=3, n_bins=16))
        predict(mesh, fm, local_parties(parts, TOPO))
    ok = audit.clean and audit.frames_checked > 0
    assert accept(9, ok, f"counters {audit.counters} over {audit.frames_checked} frames")


def test_c10_share_uniformity(accept):
    rng = np.random.default_rng(10)
    views = share(np.full(100_000, C.encode(3.25), dtype=np.uint64), rng)
    pvals = []
    for v in views:
        for words in (v.lo, v.hi):
            counts = np.bincount((words >> np.uint64(56)).astype(np.int64), minlength=256)
            pvals.append(chisquare(counts).pvalue)
    ok = min(pvals) > 0.01
    assert accept(10, ok, f"min p-value over 3 servers x 2 held words {min(pvals):.3f} (> 0.01)")
