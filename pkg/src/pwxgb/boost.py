"""Histogram XGBoost building blocks and the centralized reference learner.

Everything here is plaintext.  The vertical secure learner in
:mod:`pwxgb.federated` reuses the binning, split scan and sample split, and
swaps only the histogram aggregation for the secret-shared protocol, so the
centralized learner doubles as its losslessness oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError, EmptySampleSpaceError, LengthError, MissingBoundaryError

LOSSES = ("squared", "logistic")


@dataclass(frozen=True)
class BoostParams:
    n_trees: int = 80
    max_depth: int = 3
    n_bins: int = 32
    gamma: float = 0.0
    reg_lambda: float = 1.0
    eta: float = 0.3
    loss: str = "squared"

    def __post_init__(self):
        if self.n_trees < 1 or self.max_depth < 1 or self.n_bins < 2:
            raise ConfigError("need n_trees >= 1, max_depth >= 1, n_bins >= 2")
        if self.reg_lambda < 0 or self.gamma < 0:
            raise ConfigError("gamma and reg_lambda must be non-negative")
        if not 0 < self.eta <= 1:
            raise ConfigError("eta must lie in (0, 1]")
        if self.loss not in LOSSES:
            raise ConfigError(f"loss must be one of {LOSSES}")


@dataclass
class GradPair:
    g: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        if len(self.g) != len(self.h):
            raise LengthError("g and h differ in length")


def gradients(y, yhat, loss: str = "squared") -> GradPair:
    y = np.asarray(y, dtype=np.float64)
    yhat = np.asarray(yhat, dtype=np.float64)
    if y.shape != yhat.shape:
        raise LengthError(f"labels {y.shape} and predictions {yhat.shape} differ")
    if loss == "squared":
        return GradPair(yhat - y, np.ones_like(y))
    if loss == "logistic":
        e = np.exp(-yhat)
        return GradPair(-y + 1.0 / (1.0 + e), e / (1.0 + e) ** 2)
    raise ConfigError(f"unknown loss {loss!r}")


# ---------------------------------------------------------------------------
# binning (per party, plaintext)


@dataclass
class BinFrame:
    Xbin: np.ndarray  # int64, -1 outside the sample space
    boundaries: list[np.ndarray]


@dataclass(frozen=True)
class ColumnOrder:
    """Feature-major copy of a party's columns and their ascending sort order.

    Built once per party; every node then bins its subset without re-sorting.
    """

    XT: np.ndarray
    orderT: np.ndarray


def column_order(X: np.ndarray) -> ColumnOrder:
    XT = np.ascontiguousarray(np.asarray(X, dtype=np.float64).T)
    return ColumnOrder(XT, np.argsort(XT, axis=1, kind="stable"))


def _linear_quantiles(s: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Linear-interpolation quantiles of column-sorted ``s`` (numpy's default rule, bit for bit)."""
    n = len(s)
    virtual = (n - 1) * q
    prev = np.floor(virtual).astype(np.intp)
    nxt = np.minimum(prev + 1, n - 1)
    prev = np.minimum(prev, n - 1)
    gamma = (virtual - prev)[:, None]
    a, b = s[prev], s[nxt]
    diff = b - a
    out = a + diff * gamma
    hi = np.broadcast_to(gamma >= 0.5, out.shape)
    out[hi] = (b - diff * (1 - gamma))[hi]
    return out


def local_binning(X: np.ndarray, I: np.ndarray, B: int, order: ColumnOrder | None = None) -> BinFrame:
    """Quantile-bin every column on the rows in ``I``.

    Boundaries are the linear-interpolation quantiles at ``b/B`` with
    duplicates collapsed; a value's bin is the count of boundaries strictly
    below it, so a value equal to a boundary falls in the lower bin.
    ``order`` (from :func:`column_order`) only speeds things up.
    """
    X = np.asarray(X, dtype=np.float64)
    I = np.asarray(I, dtype=np.int64)
    if I.size == 0:
        raise EmptySampleSpaceError("cannot bin an empty sample space")
    n, nf = X.shape
    if nf == 0:
        return BinFrame(np.full((n, 0), -1, dtype=np.int64), [])
    if order is None:
        order = column_order(X)
    member = np.zeros(n, dtype=bool)
    member[I] = True
    m = len(I)
    # feature-major internally: row j lists the rows of I in ascending order of column j
    orderT = order.orderT
    rowsT = orderT[member[orderT]].reshape(nf, m)
    sT = np.take_along_axis(order.XT, rowsT, axis=1)
    qs = _linear_quantiles(sT.T, np.arange(1, B) / B)  # (B-1, nf), non-decreasing down each column
    dup = np.zeros(qs.shape, dtype=bool)
    dup[1:] = qs[1:] == qs[:-1]
    # values at sorted positions >= searchsorted(boundary, 'right') exceed that boundary
    counts = np.zeros((nf, m + 1), dtype=np.int64)
    boundaries = []
    for j in range(nf):
        bd = qs[~dup[:, j], j]
        bd = bd[bd < sT[j, -1]]  # a boundary at the column maximum only opens an empty bin
        boundaries.append(bd)
        np.add.at(counts[j], np.searchsorted(sT[j], bd, side="right"), 1)
    binsT = np.cumsum(counts[:, :m], axis=1)
    XbinT = np.full((nf, n), -1, dtype=np.int64)
    np.put_along_axis(XbinT, rowsT, binsT, axis=1)
    Xbin = XbinT.T
    return BinFrame(Xbin, boundaries)


def onehot(Xbin: np.ndarray, B: int) -> np.ndarray:
    """``(M, N*B)`` 0/1 matrix; rows with bin -1 are all zero."""
    n, nf = Xbin.shape
    out = np.zeros((n, nf * B), dtype=np.uint64)
    rows, cols = np.nonzero(Xbin >= 0)
    out[rows, cols * B + Xbin[rows, cols]] = 1
    return out


def histogram(Xbin: np.ndarray, I: np.ndarray, g: np.ndarray, h: np.ndarray, B: int) -> tuple[np.ndarray, np.ndarray]:
    """Plaintext per-(feature, bin) gradient sums over the rows in ``I``."""
    nf = Xbin.shape[1]
    idx = (Xbin[I] + np.arange(nf) * B).ravel()
    gw = np.repeat(g[I], nf)
    hw = np.repeat(h[I], nf)
    G = np.bincount(idx, weights=gw, minlength=nf * B).reshape(nf, B)
    H = np.bincount(idx, weights=hw, minlength=nf * B).reshape(nf, B)
    return G, H


# ---------------------------------------------------------------------------
# split finding (active party)


def split_gain(GL, HL, GR, HR, reg_lambda: float, gamma: float):
    G = GL + GR
    H = HL + HR
    return 0.5 * (GL**2 / (HL + reg_lambda) + GR**2 / (HR + reg_lambda) - G**2 / (H + reg_lambda)) - gamma


@dataclass(frozen=True)
class Split:
    party: int  # index k into the party order
    feature: int
    position: int  # 1-based: left child takes bins 0..position-1
    gain: float


def best_split(hists: Sequence[tuple[np.ndarray, np.ndarray]], params: BoostParams) -> Split | None:
    """Scan every (party, feature, position) triple; keep the first strict maximum above zero.

    A position whose left or right child has zero hessian mass (an empty
    child) is never chosen.
    """
    best: Split | None = None
    best_v = 0.0
    lam, gamma = params.reg_lambda, params.gamma
    for k, (G, H) in enumerate(hists):
        G = np.asarray(G, dtype=np.float64)
        H = np.asarray(H, dtype=np.float64)
        if G.size == 0:
            continue
        Gt = G.sum(axis=1, keepdims=True)
        Ht = H.sum(axis=1, keepdims=True)
        GL = np.cumsum(G, axis=1)[:, :-1]
        HL = np.cumsum(H, axis=1)[:, :-1]
        GR = Gt - GL
        HR = Ht - HL
        with np.errstate(divide="ignore", invalid="ignore"):
            v = 0.5 * (GL**2 / (HL + lam) + GR**2 / (HR + lam) - Gt**2 / (Ht + lam)) - gamma
        v = np.where((HL <= 0) | (HR <= 0) | ~np.isfinite(v), -np.inf, v)
        flat = int(np.argmax(v))
        j, s0 = divmod(flat, v.shape[1])
        if v[j, s0] > best_v:
            best_v = float(v[j, s0])
            best = Split(k, j, s0 + 1, best_v)
    return best


def sample_split(I: np.ndarray, feature: int, position: int, X: np.ndarray, boundaries: Sequence[np.ndarray]) -> np.ndarray:
    """Rows of ``I`` whose value is at most the split boundary."""
    bd = boundaries[feature] if feature < len(boundaries) else None
    if bd is None or not 1 <= position <= len(bd):
        raise MissingBoundaryError(f"no boundary at position {position} for feature {feature}")
    I = np.asarray(I, dtype=np.int64)
    return I[X[I, feature] <= bd[position - 1]]


def leaf_weight(g: np.ndarray, h: np.ndarray, reg_lambda: float) -> float:
    if len(g) == 0:
        return 0.0
    denom = float(np.sum(h)) + reg_lambda
    return 0.0 if denom == 0 else -float(np.sum(g)) / denom


# ---------------------------------------------------------------------------
# model


@dataclass
class TreeNode:
    node_id: int
    depth: int
    split: tuple[int, int, int] | None = None  # (owner party id, feature, position)
    children: tuple[int, int] | None = None
    leaf_weight: float | None = None
    sample_space: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def is_leaf(self) -> bool:
        return self.split is None


@dataclass
class Tree:
    nodes: dict[int, TreeNode] = field(default_factory=dict)

    @property
    def root(self) -> TreeNode:
        return self.nodes[0]

    def leaves(self) -> list[TreeNode]:
        return [n for n in self.nodes.values() if n.is_leaf]

    def internal(self) -> list[TreeNode]:
        return [n for n in self.nodes.values() if not n.is_leaf]


@dataclass
class SplitRecord:
    """Training trace entry, kept for verification only (never serialised)."""

    tree: int
    node: int
    party: int
    feature: int
    position: int
    gain: float
    left: np.ndarray
    right: np.ndarray


@dataclass
class BoostModel:
    trees: list[Tree]
    params: BoostParams
    base_score: float
    party_ids: tuple[int, ...]
    trace: list[SplitRecord] = field(default_factory=list, repr=False, compare=False)

    def split_tuples(self) -> list[tuple[int, int, int, int, int]]:
        """``(tree, node, k, feature, position)`` for every split, in tree/node order."""
        out = []
        for t, tree in enumerate(self.trees):
            for nid in sorted(tree.nodes):
                n = tree.nodes[nid]
                if not n.is_leaf:
                    owner, j, s = n.split
                    out.append((t, nid, self.party_ids.index(owner), j, s))
        return out


@dataclass
class BoundaryStore:
    """One party's split thresholds, keyed by ``(tree, node)``."""

    party: int
    entries: dict[tuple[int, int], tuple[int, float]] = field(default_factory=dict)

    def put(self, tree: int, node: int, feature: int, value: float) -> None:
        self.entries[(tree, node)] = (int(feature), float(value))

    def get(self, tree: int, node: int) -> tuple[int, float]:
        try:
            return self.entries[(tree, node)]
        except KeyError:
            raise MissingBoundaryError(f"party {self.party} holds no boundary for tree {tree} node {node}") from None


def children_ids(node_id: int) -> tuple[int, int]:
    return 2 * node_id + 1, 2 * node_id + 2


# ---------------------------------------------------------------------------
# centralized reference learner


def quantize_grads(gp: GradPair, codec) -> GradPair:
    """Round gradients onto a fixed-point grid, as the secure learner does before sharing."""
    return GradPair(np.asarray(codec.quantize(gp.g), dtype=np.float64),
                    np.asarray(codec.quantize(gp.h), dtype=np.float64))


def oracle_train(X_parts: Sequence[np.ndarray], y, params: BoostParams,
                 party_ids: Sequence[int] | None = None, grad_codec=None) -> tuple[BoostModel, dict[int, BoundaryStore]]:
    """The same algorithm with all parties' columns in one place.

    ``grad_codec`` (a :class:`~pwxgb.ring.FixedCodec`) rounds each tree's
    gradients onto the same grid the secure learner shares them on; every
    histogram sum is then exact in float64 and ties break identically.
    """
    X_parts = [np.asarray(X, dtype=np.float64) for X in X_parts]
    y = np.asarray(y, dtype=np.float64)
    party_ids = tuple(party_ids) if party_ids is not None else tuple(range(1, len(X_parts) + 1))
    stores = {pid: BoundaryStore(pid) for pid in party_ids}
    orders = [column_order(X) for X in X_parts]
    n = len(y)
    base = float(np.mean(y))
    yhat = np.full(n, base)
    B = params.n_bins
    model = BoostModel([], params, base, party_ids)
    for t in range(params.n_trees):
        gp = gradients(y, yhat, params.loss)
        if grad_codec is not None:
            gp = quantize_grads(gp, grad_codec)
        tree = Tree()
        root = TreeNode(0, 0, sample_space=np.arange(n))
        tree.nodes[0] = root
        level = [root]
        for d in range(1, params.max_depth + 1):
            nxt = []
            for node in level:
                I = node.sample_space
                frames = [local_binning(X, I, B, o) for X, o in zip(X_parts, orders)]
                hists = [histogram(f.Xbin, I, gp.g, gp.h, B) for f in frames]
                sp = best_split(hists, params)
                if sp is None:
                    continue
                left = sample_split(I, sp.feature, sp.position, X_parts[sp.party], frames[sp.party].boundaries)
                right = np.setdiff1d(I, left, assume_unique=True)
                owner = party_ids[sp.party]
                stores[owner].put(t, node.node_id, sp.feature, frames[sp.party].boundaries[sp.feature][sp.position - 1])
                lid, rid = children_ids(node.node_id)
                node.split = (owner, sp.feature, sp.position)
                node.children = (lid, rid)
                tree.nodes[lid] = TreeNode(lid, d, sample_space=left)
                tree.nodes[rid] = TreeNode(rid, d, sample_space=right)
                nxt += [tree.nodes[lid], tree.nodes[rid]]
                model.trace.append(SplitRecord(t, node.node_id, sp.party, sp.feature, sp.position, sp.gain, left, right))
            level = nxt
        for leaf in tree.leaves():
            I = leaf.sample_space
            leaf.leaf_weight = leaf_weight(gp.g[I], gp.h[I], params.reg_lambda)
            yhat[I] += params.eta * leaf.leaf_weight
        model.trees.append(tree)
    return model, stores


def oracle_predict(model: BoostModel, stores: dict[int, BoundaryStore], X_parts: Sequence[np.ndarray]) -> np.ndarray:
    """Walk every tree with direct access to all parties' columns."""
    cols = {pid: np.asarray(X, dtype=np.float64) for pid, X in zip(model.party_ids, X_parts)}
    n = len(next(iter(cols.values())))
    out = np.full(n, model.base_score)
    for t, tree in enumerate(model.trees):
        pos = np.zeros(n, dtype=np.int64)
        for _ in range(model.params.max_depth):
            for nid in np.unique(pos):
                node = tree.nodes[int(nid)]
                if node.is_leaf:
                    continue
                owner = node.split[0]
                feat, bound = stores[owner].get(t, node.node_id)
                rows = np.nonzero(pos == nid)[0]
                go_left = cols[owner][rows, feat] <= bound
                lid, rid = node.children
                pos[rows] = np.where(go_left, lid, rid)
        weights = np.array([tree.nodes[int(p)].leaf_weight for p in pos])
        out += model.params.eta * weights
    return out
