"""Participant selection by multi-kernel MMD and a thresholded Gaussian adjacency."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .data import STEPS_PER_DAY, FarmSeries
from .errors import DegenerateError, EmptySetError

DEFAULT_MULTIPLIERS = (0.25, 0.5, 1.0, 2.0, 4.0)


class DegenerateWarning(UserWarning):
    pass


@dataclass(frozen=True)
class KernelSpec:
    """Sum of Gaussian kernels ``exp(-|x-y|^2 / (2 s^2))`` over ``s = base * multiplier``."""

    base_bandwidth: float
    multipliers: tuple[float, ...] = DEFAULT_MULTIPLIERS

    def __post_init__(self):
        object.__setattr__(self, "multipliers", tuple(float(m) for m in self.multipliers))
        if self.base_bandwidth <= 0 or any(m <= 0 for m in self.multipliers) or not self.multipliers:
            raise ValueError("bandwidths must be positive")

    @property
    def bandwidths(self) -> np.ndarray:
        return self.base_bandwidth * np.asarray(self.multipliers)

    def gram(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        d2 = cdist(a, b, "sqeuclidean")
        return sum(np.exp(-d2 / (2.0 * s * s)) for s in self.bandwidths)

    @classmethod
    def median_heuristic(cls, sets: Sequence[np.ndarray], multipliers=DEFAULT_MULTIPLIERS,
                         max_points: int = 1000, seed: int = 0) -> "KernelSpec":
        """Base bandwidth = median pairwise distance over the pooled windows."""
        pooled = np.concatenate([np.asarray(s, dtype=np.float64) for s in sets], axis=0)
        if len(pooled) > max_points:
            rng = np.random.default_rng(seed)
            pooled = pooled[np.sort(rng.choice(len(pooled), max_points, replace=False))]
        med = float(np.median(pdist(pooled))) if len(pooled) > 1 else 0.0
        if med <= 0:
            med = 1.0
        return cls(med, multipliers)


def sample_windows(power: np.ndarray, length: int = 16, stride: int = 4, history_days: int = 14,
                   cap: int = 512, seed: int = 0) -> np.ndarray:
    """Sliding windows of the most recent ``history_days`` of normalised power."""
    recent = np.asarray(power, dtype=np.float64)[-history_days * STEPS_PER_DAY:]
    if len(recent) < length:
        raise EmptySetError("history shorter than one window")
    wins = np.lib.stride_tricks.sliding_window_view(recent, length)[::stride]
    wins = wins[~np.isnan(wins).any(axis=1)]
    if len(wins) > cap:
        rng = np.random.default_rng(seed)
        wins = wins[np.sort(rng.choice(len(wins), cap, replace=False))]
    return np.array(wins)


def mmd2(d1: np.ndarray, d2: np.ndarray, k: KernelSpec) -> float:
    """Biased (V-statistic) squared MMD, clamped at zero."""
    d1 = np.atleast_2d(np.asarray(d1, dtype=np.float64))
    d2 = np.atleast_2d(np.asarray(d2, dtype=np.float64))
    if d1.size == 0 or d2.size == 0:
        raise EmptySetError("mmd2 needs two non-empty sample sets")
    val = k.gram(d1, d1).mean() + k.gram(d2, d2).mean() - 2.0 * k.gram(d1, d2).mean()
    return max(float(val), 0.0)


@dataclass
class Adjacency:
    A: np.ndarray
    beta: float
    sigma: float
    mean: float
    distances: np.ndarray
    farm_ids: tuple = ()

    def __post_init__(self):
        if not self.farm_ids:
            self.farm_ids = tuple(range(len(self.A)))


def adjacency_from_distances(D: np.ndarray, beta: float, farm_ids: Sequence = (), strict: bool = False) -> Adjacency:
    """Thresholded Gaussian adjacency on a symmetric distance matrix.

    ``sigma`` is the (population) standard deviation of the off-diagonal
    distances and ``mean`` their mean; ``A_ij = exp(-D_ij / sigma^2)`` where
    ``D_ij <= beta * mean`` and 0 elsewhere.  When every off-diagonal distance
    is equal (``sigma == 0``) all farms are interchangeable and ``A`` is all
    ones; ``strict=True`` raises instead.
    """
    D = np.asarray(D, dtype=np.float64)
    n = len(D)
    if n < 2:
        raise EmptySetError("adjacency needs at least two farms")
    iu = np.triu_indices(n, 1)
    off = D[iu]
    mean = float(off.mean())
    sigma = float(off.std())
    if sigma == 0.0:
        if strict:
            raise DegenerateError("all pairwise distances are equal; sigma = 0")
        warnings.warn("all pairwise distances are equal; adjacency is all ones", DegenerateWarning, stacklevel=2)
        return Adjacency(np.ones((n, n)), beta, sigma, mean, D, tuple(farm_ids))
    A = np.where(D <= beta * mean, np.exp(-D / sigma**2), 0.0)
    A = 0.5 * (A + A.T)
    np.fill_diagonal(A, 1.0)
    return Adjacency(A, beta, sigma, mean, D, tuple(farm_ids))


def adjacency(farms: Sequence[np.ndarray], beta: float, k: KernelSpec | None = None, farm_ids: Sequence = (),
              strict: bool = False) -> Adjacency:
    """Pairwise MMD^2 between farms' window sets, then the thresholded adjacency."""
    n = len(farms)
    if n < 2:
        raise EmptySetError("adjacency needs at least two farms")
    if k is None:
        k = KernelSpec.median_heuristic(farms)
    D = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            D[i, j] = D[j, i] = mmd2(farms[i], farms[j], k)
    return adjacency_from_distances(D, beta, farm_ids, strict)


def distance_adjacency(locations: Sequence[tuple[float, float]], beta: float, farm_ids: Sequence = (),
                       strict: bool = False) -> Adjacency:
    """Same threshold rule on squared geographic distance (the distance-selection baseline)."""
    loc = np.asarray(locations, dtype=np.float64)
    return adjacency_from_distances(cdist(loc, loc, "sqeuclidean"), beta, farm_ids, strict)


def select_participants(adj: Adjacency, target) -> list:
    """Farms with non-zero adjacency to ``target``, strongest first, ties by id."""
    ids = list(adj.farm_ids)
    t = ids.index(target)
    row = adj.A[t]
    chosen = [(ids[j], row[j]) for j in range(len(ids)) if j != t and row[j] != 0]
    chosen.sort(key=lambda p: (-p[1], p[0]))
    return [fid for fid, _ in chosen]


def select_for_target(series: Sequence[FarmSeries], target, beta: float = 0.85, length: int = 16, stride: int = 4,
                      history_days: int = 14, cap: int = 512, multipliers=DEFAULT_MULTIPLIERS,
                      seed: int = 0) -> tuple[Adjacency, list]:
    """Window every farm's recent history, build the MMD adjacency and pick ``target``'s peers."""
    sets = [sample_windows(s.power, length, stride, history_days, cap, seed) for s in series]
    k = KernelSpec.median_heuristic(sets, multipliers, seed=seed)
    adj = adjacency(sets, beta, k, [s.farm_id for s in series])
    return adj, select_participants(adj, target)
