"""Vertical secure XGBoost over a party mesh.

The active party holds labels and drives the loop.  Per tree it shares the
gradients once; per node it announces the sample space, every passive party
bins its own columns and shares the one-hot bin matrix, the three servers
aggregate ``onehot^T [g h]`` under replicated shares and reveal the
histograms to the active party only.  The active party's own histograms are
computed locally.  The owner of the winning feature answers with the left
sample set and keeps the threshold.

All parties run in one process, but each step touches only that party's
state and every cross-party value travels as a :class:`~pwxgb.net.Frame`.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .boost import (
    BinFrame,
    BoostModel,
    BoostParams,
    BoundaryStore,
    GradPair,
    SplitRecord,
    Tree,
    TreeNode,
    best_split,
    children_ids,
    column_order,
    gradients,
    histogram,
    leaf_weight,
    local_binning,
    onehot,
    quantize_grads,
    sample_split,
)
from .errors import ConfigError, LengthError, PwxgbError, ShapeError
from .net import FrameKind, Mesh
from .ring import DEFAULT_CODEC, FixedCodec, as_words
from .secure_ops import SecureContext, Shared, sec_eq_const, sec_mul
from .sharing import ShareTensor, ZeroSharer

AGGREGATIONS = ("onehot", "eq_const")


# ---------------------------------------------------------------------------
# payload helpers


def _pack_ints(a) -> bytes:
    a = np.ascontiguousarray(a, dtype="<i8")
    return struct.pack("<I", a.size) + a.tobytes()


def _unpack_ints(b: bytes) -> np.ndarray:
    (n,) = struct.unpack_from("<I", b)
    return np.frombuffer(b, dtype="<i8", count=n, offset=4).astype(np.int64)


def _pack_bits(bits: np.ndarray) -> bytes:
    bits = np.asarray(bits, dtype=bool)
    return struct.pack("<I", bits.size) + np.packbits(bits).tobytes()


def _unpack_bits(b: bytes) -> np.ndarray:
    (n,) = struct.unpack_from("<I", b)
    return np.unpackbits(np.frombuffer(b, dtype=np.uint8, offset=4), count=n).astype(bool)


# ---------------------------------------------------------------------------
# parties


@dataclass
class DataParty:
    """A wind farm contributing feature columns; holds its own split thresholds."""

    pid: int
    X: np.ndarray
    store: BoundaryStore = None
    _frame: BinFrame | None = field(default=None, repr=False)
    _order: np.ndarray | None = field(default=None, repr=False)
    _table: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        if self.X.ndim != 2:
            raise ShapeError(f"party {self.pid} features must be 2-D")
        if self.store is None:
            self.store = BoundaryStore(self.pid)

    def bin(self, I: np.ndarray, B: int) -> BinFrame:
        if self._order is None:
            self._order = column_order(self.X)
        self._frame = local_binning(self.X, I, B, self._order)
        return self._frame

    def left_set(self, tree: int, node: int, I: np.ndarray, feature: int, position: int) -> np.ndarray:
        left = sample_split(I, feature, position, self.X, self._frame.boundaries)
        self.store.put(tree, node, feature, self._frame.boundaries[feature][position - 1])
        return left

    def directions(self, X: np.ndarray, trees: np.ndarray, nodes: np.ndarray, rows: np.ndarray) -> np.ndarray:
        """``True`` (go left) where the queried row's value is at most the stored threshold."""
        feat, thr = self._lookup()
        trees, nodes = np.asarray(trees), np.asarray(nodes)
        known = (trees < feat.shape[0]) & (nodes < feat.shape[1])
        f = np.full(len(trees), -1, dtype=np.int64)
        f[known] = feat[trees[known], nodes[known]]
        if (f < 0).any():
            i = int(np.argmax(f < 0))
            self.store.get(int(trees[i]), int(nodes[i]))  # raises MissingBoundaryError
        b = thr[trees, nodes]
        return X[rows, f] <= b

    def _lookup(self) -> tuple[np.ndarray, np.ndarray]:
        if self._table is None or self._table[0] != len(self.store.entries):
            keys = list(self.store.entries)
            nt = max((t for t, _ in keys), default=-1) + 1
            nn = max((n for _, n in keys), default=-1) + 1
            feat = np.full((nt, nn), -1, dtype=np.int64)
            thr = np.zeros((nt, nn))
            for (t, n), (j, v) in self.store.entries.items():
                feat[t, n], thr[t, n] = j, v
            self._table = (len(self.store.entries), feat, thr)
        return self._table[1], self._table[2]


@dataclass
class ActiveParty(DataParty):
    y: np.ndarray = None

    def __post_init__(self):
        super().__post_init__()
        if self.y is None:
            raise ConfigError("the active party needs labels")
        self.y = np.asarray(self.y, dtype=np.float64)
        if len(self.y) != len(self.X):
            raise LengthError("labels and active features differ in length")


PassiveParty = DataParty


@dataclass
class FederatedModel:
    """The tree model (on the active party) plus every party's boundary store."""

    model: BoostModel
    stores: dict[int, BoundaryStore]

    @property
    def params(self) -> BoostParams:
        return self.model.params


# ---------------------------------------------------------------------------
# training


class SecureTrainer:
    """One training run across a connected mesh."""

    def __init__(self, mesh: Mesh, parties: Mapping[int, np.ndarray], y, params: BoostParams,
                 seed: int = 0, codec: FixedCodec = DEFAULT_CODEC, aggregation: str = "onehot"):
        if aggregation not in AGGREGATIONS:
            raise ConfigError(f"aggregation must be one of {AGGREGATIONS}")
        topo = mesh.topology
        missing = set(topo.providers) - set(parties)
        if missing:
            raise ConfigError(f"no features for parties {sorted(missing)}")
        self.mesh = mesh
        self.topology = topo
        self.params = params
        self.codec = codec
        self.aggregation = aggregation
        self.order = topo.providers
        n = len(y)
        self.active = ActiveParty(topo.active, parties[topo.active], y=y)
        self.passives = {p: DataParty(p, parties[p]) for p in topo.passives}
        for p in self.passives.values():
            if len(p.X) != n:
                raise LengthError(f"party {p.pid} has {len(p.X)} rows, expected {n}")
        self.zero = ZeroSharer.from_seed(seed)
        ss = np.random.SeedSequence(seed)
        self.rngs = {pid: np.random.default_rng(s) for pid, s in zip(self.order, ss.spawn(len(self.order)))}
        if mesh.audit is not None:
            for p in (self.active, *self.passives.values()):
                mesh.audit.register_features(p.X)
            mesh.audit.register_secret(self.active.y)

    def _party(self, pid: int) -> DataParty:
        return self.active if pid == self.active.pid else self.passives[pid]

    def _ctx(self) -> SecureContext:
        return SecureContext(self.mesh, self.zero, self.codec)

    # -- per tree ------------------------------------------------------------

    def _share_gradients(self, gp: GradPair) -> Shared:
        ctx = self._ctx()
        words = self.codec.encode(np.stack([gp.g, gp.h], axis=1))
        with self.mesh.phase("share_gradients"):
            return ctx.input(self.active.pid, words, self.rngs[self.active.pid], kind=FrameKind.SHARE_GRAD)

    # -- per node ------------------------------------------------------------

    def _aggregate(self, ctx: SecureContext, pid: int, frame: BinFrame, gh: Shared) -> tuple[np.ndarray, np.ndarray]:
        B = self.params.n_bins
        n, nf = frame.Xbin.shape
        rng = self.rngs[pid]
        if self.aggregation == "onehot":
            # the owner shares the bin-major (transposed) layout so servers multiply without a copy
            ohT = ctx.input(pid, np.ascontiguousarray(onehot(frame.Xbin, B).T), rng, kind=FrameKind.SHARE_FEATURE)
        else:
            xb = ctx.input(pid, as_words(frame.Xbin.T), rng, kind=FrameKind.SHARE_FEATURE)
            tiled = Shared(tuple(
                ShareTensor(v.server, np.repeat(v.lo, B, axis=0), np.repeat(v.hi, B, axis=0)) for v in xb.views
            ))
            ohT = sec_eq_const(ctx, tiled, np.repeat(np.tile(np.arange(B, dtype=np.uint64), nf)[:, None], n, axis=1))
        # flags carry no fractional scale, so the product needs no truncation
        agg = sec_mul(ctx, ohT, gh, truncate=False, matmul=True)
        words = ctx.reveal_to(self.active.pid, agg)
        vals = np.asarray(self.codec.decode(words)).reshape(nf, B, 2)
        return vals[..., 0], vals[..., 1]

    def _expand(self, t: int, node: TreeNode, gp: GradPair, gh: Shared):
        params = self.params
        B = params.n_bins
        I = node.sample_space
        ctx = self._ctx()
        hists = []
        with self.mesh.phase("aggregate"):
            for pid in self.order:
                party = self._party(pid)
                if pid == self.active.pid:
                    frame = party.bin(I, B)
                    hists.append(histogram(frame.Xbin, I, gp.g, gp.h, B))
                    continue
                got = _unpack_ints(ctx.message(self.active.pid, pid, FrameKind.SAMPLE_SPACE, _pack_ints(I)))
                frame = party.bin(got, B)
                hists.append(self._aggregate(ctx, pid, frame, gh))
        with self.mesh.phase("split"):
            sp = best_split(hists, params)
            if sp is None:
                return None
            owner = self.order[sp.party]
            if owner == self.active.pid:
                left = self.active.left_set(t, node.node_id, I, sp.feature, sp.position)
            else:
                req = struct.pack("<IIII", t, node.node_id, sp.feature, sp.position)
                payload = ctx.message(self.active.pid, owner, FrameKind.SPLIT_REQUEST, req)
                tt, nid, j, s = struct.unpack("<IIII", payload)
                party = self._party(owner)
                left_local = party.left_set(tt, nid, I, j, s)
                left = _unpack_ints(ctx.message(owner, self.active.pid, FrameKind.LEFT_SET, _pack_ints(left_local)))
        return sp, owner, left

    def _grow_level(self, t: int, d: int, tree: Tree, level: list, gp: GradPair, gh: Shared,
                    model: BoostModel) -> list:
        nxt = []
        for node in level:
            try:
                res = self._expand(t, node, gp, gh)
            except PwxgbError as e:
                raise type(e)(f"tree {t} node {node.node_id}: {e}") from e
            if res is None:
                continue
            sp, owner, left = res
            right = np.setdiff1d(node.sample_space, left, assume_unique=True)
            lid, rid = children_ids(node.node_id)
            node.split = (owner, sp.feature, sp.position)
            node.children = (lid, rid)
            tree.nodes[lid] = TreeNode(lid, d, sample_space=left)
            tree.nodes[rid] = TreeNode(rid, d, sample_space=right)
            nxt += [tree.nodes[lid], tree.nodes[rid]]
            model.trace.append(SplitRecord(t, node.node_id, sp.party, sp.feature, sp.position, sp.gain, left, right))
        return nxt

    def train(self) -> FederatedModel:
        params = self.params
        y = self.active.y
        n = len(y)
        base = float(np.mean(y))
        yhat = np.full(n, base)
        model = BoostModel([], params, base, tuple(self.order))
        for t in range(params.n_trees):
            gp = quantize_grads(gradients(y, yhat, params.loss), self.codec)
            if self.mesh.audit is not None:
                self.mesh.audit.register_secret(gp.g)
            gh = self._share_gradients(gp)
            tree = Tree()
            tree.nodes[0] = TreeNode(0, 0, sample_space=np.arange(n))
            level = [tree.nodes[0]]
            for d in range(1, params.max_depth + 1):
                nxt = []
                with self.mesh.phase(f"depth_{d}"):
                    nxt = self._grow_level(t, d, tree, level, gp, gh, model)
                level = nxt
            for leaf in tree.leaves():
                I = leaf.sample_space
                leaf.leaf_weight = leaf_weight(gp.g[I], gp.h[I], params.reg_lambda)
                yhat[I] += params.eta * leaf.leaf_weight
            model.trees.append(tree)
        stores = {p: self._party(p).store for p in self.order}
        return FederatedModel(model, stores)


def train(mesh: Mesh, parties: Mapping[int, np.ndarray], y, params: BoostParams | None = None, seed: int = 0,
          codec: FixedCodec = DEFAULT_CODEC, aggregation: str = "onehot") -> FederatedModel:
    """Secure vertical training; ``parties`` maps party id to its aligned feature rows."""
    return SecureTrainer(mesh, parties, y, params or BoostParams(), seed, codec, aggregation).train()


# ---------------------------------------------------------------------------
# inference


def _node_tables(model: BoostModel) -> tuple[np.ndarray, ...]:
    """Dense ``(tree, node)`` tables of owner (-1 at leaves), children and leaf weight."""
    width = max((max(t.nodes) for t in model.trees if t.nodes), default=0) + 1
    nt = len(model.trees)
    owner = np.full((nt, width), -1, dtype=np.int64)
    left = np.zeros((nt, width), dtype=np.int64)
    right = np.zeros((nt, width), dtype=np.int64)
    weight = np.zeros((nt, width))
    for t, tree in enumerate(model.trees):
        for nid, node in tree.nodes.items():
            if node.is_leaf:
                weight[t, nid] = node.leaf_weight
            else:
                owner[t, nid] = node.split[0]
                left[t, nid], right[t, nid] = node.children
    return owner, left, right, weight


def predict(mesh: Mesh, fm: FederatedModel, parties: Mapping[int, np.ndarray]) -> np.ndarray:
    """Distributed inference, level by level across all trees.

    At each depth the active party batches one query per owner listing
    ``(tree, node, row)``; the owner compares its own values with its stored
    thresholds and answers with direction bits only.
    """
    model = fm.model
    active = mesh.topology.active
    X = {p: np.asarray(parties[p], dtype=np.float64) for p in model.party_ids}
    n = len(X[active])
    for p, Xp in X.items():
        if len(Xp) != n:
            raise LengthError(f"party {p} has {len(Xp)} rows, expected {n}")
    holders = {p: DataParty(p, X[p], store=fm.stores[p]) for p in model.party_ids}
    owner, left, right, weight = _node_tables(model)
    nt = len(model.trees)
    tix = np.arange(nt)[:, None]
    pos = np.zeros((nt, n), dtype=np.int64)
    ctx = SecureContext(mesh, ZeroSharer.from_seed(0))
    for _ in range(model.params.max_depth):
        own = owner[tix, pos]
        if (own < 0).all():
            break
        for p in np.unique(own[own >= 0]):
            trees, rows = np.nonzero(own == p)
            nodes = pos[trees, rows]
            if p == active:
                go_left = holders[active].directions(X[active], trees, nodes, rows)
            else:
                q = ctx.message(active, int(p), FrameKind.PREDICT_QUERY,
                                _pack_ints(trees) + _pack_ints(nodes) + _pack_ints(rows))
                k = len(trees) * 8 + 4
                qt, qn, qr = _unpack_ints(q[:k]), _unpack_ints(q[k:2 * k]), _unpack_ints(q[2 * k:])
                bits = holders[int(p)].directions(X[int(p)], qt, qn, qr)
                go_left = _unpack_bits(ctx.message(int(p), active, FrameKind.DIRECTION, _pack_bits(bits)))
            pos[trees, rows] = np.where(go_left, left[trees, nodes], right[trees, nodes])
    return model.base_score + model.params.eta * weight[tix, pos].sum(axis=0)


def local_parties(frames: Sequence[np.ndarray], topology) -> dict[int, np.ndarray]:
    """Map feature blocks to provider ids in topology order (active first)."""
    if len(frames) != topology.m:
        raise ConfigError(f"{len(frames)} feature blocks for {topology.m} providers")
    return dict(zip(topology.providers, frames))
