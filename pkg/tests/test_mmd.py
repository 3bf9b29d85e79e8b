import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pwxgb.data import synth_cluster
from pwxgb.errors import DegenerateError, EmptySetError
from pwxgb.mmd import (
    Adjacency,
    DegenerateWarning,
    KernelSpec,
    adjacency,
    adjacency_from_distances,
    distance_adjacency,
    mmd2,
    sample_windows,
    select_for_target,
    select_participants,
)


def brute_mmd2(a, b, k):
    def K(x, y):
        return sum(np.exp(-np.sum((x - y) ** 2) / (2 * s * s)) for s in k.bandwidths)

    kaa = sum(K(x, y) for x in a for y in a) / len(a) ** 2
    kbb = sum(K(x, y) for x in b for y in b) / len(b) ** 2
    kab = sum(K(x, y) for x in a for y in b) / (len(a) * len(b))
    return kaa + kbb - 2 * kab


def test_closed_form_two_points():
    k = KernelSpec(1.0, (1.0,))
    assert abs(mmd2([[0.0]], [[1.0]], k) - (2 - 2 * np.exp(-0.5))) < 1e-12


def test_identity_and_symmetry(rng):
    k = KernelSpec(0.7)
    a, b = rng.random((30, 16)), rng.random((25, 16))
    assert mmd2(a, a, k) == 0.0
    assert mmd2(a, b, k) == pytest.approx(mmd2(b, a, k), rel=1e-12)


def test_against_brute_force(rng):
    k = KernelSpec(0.9)
    a, b = rng.random((30, 16)), rng.random((30, 16)) ** 2
    want = brute_mmd2(a, b, k)
    assert abs(mmd2(a, b, k) - want) <= 1e-12 * abs(want)


def test_empty_set():
    with pytest.raises(EmptySetError):
        mmd2(np.zeros((0, 4)), np.ones((2, 4)), KernelSpec(1.0))


def test_kernel_spec_validation():
    with pytest.raises(ValueError):
        KernelSpec(0.0)
    with pytest.raises(ValueError):
        KernelSpec(1.0, (1.0, -2.0))
    assert KernelSpec.median_heuristic([np.zeros((3, 2))]).base_bandwidth == 1.0


def test_identical_farms_all_ones():
    w = np.random.default_rng(0).random((20, 16))
    with pytest.warns(DegenerateWarning):
        adj = adjacency([w, w], 0.85)
    assert np.array_equal(adj.A, np.ones((2, 2)))
    with pytest.raises(DegenerateError):
        adjacency([w, w], 0.85, strict=True)


def test_outlier_farm_thresholded():
    D = np.array([[0.0, 1.0, 10.0], [1.0, 0.0, 10.0], [10.0, 10.0, 0.0]])
    adj = adjacency_from_distances(D, 1.0)
    assert adj.A[0, 2] == adj.A[2, 0] == adj.A[1, 2] == adj.A[2, 1] == 0
    assert adj.A[0, 1] == pytest.approx(np.exp(-1.0 / np.std([1.0, 10.0, 10.0]) ** 2))
    assert abs(adj.mean - 7.0) < 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 7), st.integers(0, 10_000), st.floats(0.3, 1.5))
def test_adjacency_invariants(n, seed, beta):
    rng = np.random.default_rng(seed)
    P = rng.random((n, 4))
    D = ((P[:, None] - P[None]) ** 2).sum(-1)
    adj = adjacency_from_distances(D, beta)
    assert np.all(np.diag(adj.A) == 1.0)
    assert np.max(np.abs(adj.A - adj.A.T)) <= 1e-12
    assert np.all((adj.A >= 0) & (adj.A <= 1))


def test_select_participants_order():
    A = np.array([[1, 0.9, 0.9, 0], [0.9, 1, 0, 0], [0.9, 0, 1, 0], [0, 0, 0, 1]], dtype=float)
    adj = Adjacency(A, 1.0, 1.0, 1.0, np.zeros((4, 4)), (1, 2, 3, 4))
    assert select_participants(adj, 1) == [2, 3]
    assert select_participants(adj, 4) == []
    for t in (1, 2, 3, 4):
        assert t not in select_participants(adj, t)


def test_distance_adjacency():
    adj = distance_adjacency([(0, 0), (1, 0), (50, 50)], 1.0, ("a", "b", "c"))
    assert select_participants(adj, "a") == ["b"]


def test_sample_windows(rng):
    p = rng.random(14 * 96 + 50)
    w = sample_windows(p, 16, 4, 14)
    assert w.shape == ((14 * 96 - 16) // 4 + 1, 16)
    assert np.array_equal(w[0], p[50:66])
    assert len(sample_windows(p, 16, 1, 14, cap=100)) == 100
    p[60] = np.nan
    assert not np.isnan(sample_windows(p, 16, 4, 14)).any()
    with pytest.raises(EmptySetError):
        sample_windows(p[:10], 16)


def test_scale_free_selection():
    farms = synth_cluster(6, 20 * 96, 0.9, 3, n_correlated=4)
    sets = [sample_windows(f.power) for f in farms]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateWarning)
        base = select_participants(adjacency(sets, 0.85), 0)
        scaled = select_participants(adjacency([3.0 * s for s in sets], 0.85), 0)
    assert base == scaled


def test_select_for_target_finds_cluster():
    farms = synth_cluster(8, 30 * 96, 0.9, 0, n_correlated=5)
    adj, peers = select_for_target(farms, 0)
    assert adj.A.shape == (8, 8)
    assert set(peers) <= set(range(1, 8))
    assert len(set(peers) & {1, 2, 3, 4}) >= 3
