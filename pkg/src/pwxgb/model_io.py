"""Versioned binary model files and per-party boundary stores.

Layout (little endian): 6-byte magic, u16 version, u32 JSON-header length,
JSON header, then fixed-width records.  Leaf weights and thresholds are
stored as raw float64 so a save/load round trip is bit-exact.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict
from pathlib import Path

from .boost import BoostModel, BoostParams, BoundaryStore, Tree, TreeNode
from .errors import FormatError
from .federated import FederatedModel

MODEL_MAGIC = b"PWXGBM"
STORE_MAGIC = b"PWXGBS"
VERSION = 1

_NODE = struct.Struct("<IIIBiiiiid")  # tree, node, depth, is_leaf, owner, feature, position, left, right, weight
_ENTRY = struct.Struct("<IIid")  # tree, node, feature, threshold


def _header(magic: bytes, meta: dict) -> bytes:
    blob = json.dumps(meta, sort_keys=True).encode()
    return magic + struct.pack("<HI", VERSION, len(blob)) + blob


def _read_header(data: bytes, magic: bytes) -> tuple[dict, int]:
    if data[:6] != magic:
        raise FormatError(f"bad magic {data[:6]!r}, expected {magic!r}")
    version, n = struct.unpack_from("<HI", data, 6)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    try:
        meta = json.loads(data[12:12 + n])
    except ValueError as e:
        raise FormatError(f"corrupt header: {e}") from None
    return meta, 12 + n


def model_to_bytes(model: BoostModel) -> bytes:
    recs = []
    for t, tree in enumerate(model.trees):
        for nid in sorted(tree.nodes):
            n = tree.nodes[nid]
            if n.is_leaf:
                recs.append(_NODE.pack(t, nid, n.depth, 1, -1, -1, -1, -1, -1, n.leaf_weight))
            else:
                owner, j, s = n.split
                recs.append(_NODE.pack(t, nid, n.depth, 0, owner, j, s, *n.children, 0.0))
    meta = {
        "params": asdict(model.params),
        "base_score": model.base_score.hex(),
        "party_ids": list(model.party_ids),
        "n_trees": len(model.trees),
        "n_nodes": len(recs),
    }
    return _header(MODEL_MAGIC, meta) + b"".join(recs)


def model_from_bytes(data: bytes) -> BoostModel:
    meta, off = _read_header(data, MODEL_MAGIC)
    if len(data) - off != meta["n_nodes"] * _NODE.size:
        raise FormatError("truncated model file")
    trees = [Tree() for _ in range(meta["n_trees"])]
    for t, nid, depth, is_leaf, owner, j, s, lid, rid, w in _NODE.iter_unpack(data[off:]):
        if is_leaf:
            node = TreeNode(nid, depth, leaf_weight=w)
        else:
            node = TreeNode(nid, depth, split=(owner, j, s), children=(lid, rid))
        trees[t].nodes[nid] = node
    return BoostModel(trees, BoostParams(**meta["params"]), float.fromhex(meta["base_score"]),
                      tuple(meta["party_ids"]))


def store_to_bytes(store: BoundaryStore) -> bytes:
    recs = [_ENTRY.pack(t, n, f, v) for (t, n), (f, v) in sorted(store.entries.items())]
    return _header(STORE_MAGIC, {"party": store.party, "n_entries": len(recs)}) + b"".join(recs)


def store_from_bytes(data: bytes) -> BoundaryStore:
    meta, off = _read_header(data, STORE_MAGIC)
    if len(data) - off != meta["n_entries"] * _ENTRY.size:
        raise FormatError("truncated boundary store")
    store = BoundaryStore(meta["party"])
    for t, n, f, v in _ENTRY.iter_unpack(data[off:]):
        store.entries[(t, n)] = (f, v)
    return store


def save(fm: FederatedModel, directory: str | Path) -> list[Path]:
    """Write ``model.bin`` plus one ``boundaries_<party>.bin`` per party."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = [d / "model.bin"]
    paths[0].write_bytes(model_to_bytes(fm.model))
    for pid, store in fm.stores.items():
        p = d / f"boundaries_{pid}.bin"
        p.write_bytes(store_to_bytes(store))
        paths.append(p)
    return paths


def load(directory: str | Path) -> FederatedModel:
    d = Path(directory)
    try:
        model = model_from_bytes((d / "model.bin").read_bytes())
        stores = {pid: store_from_bytes((d / f"boundaries_{pid}.bin").read_bytes()) for pid in model.party_ids}
    except FileNotFoundError as e:
        raise FormatError(f"missing model file: {e.filename}") from None
    return FederatedModel(model, stores)


def to_json(fm: FederatedModel) -> dict:
    """Human-readable dump (debugging only; not a load format)."""
    m = fm.model
    return {
        "params": asdict(m.params),
        "base_score": m.base_score,
        "party_ids": list(m.party_ids),
        "trees": [
            {str(nid): ({"leaf": n.leaf_weight} if n.is_leaf else
                        {"owner": n.split[0], "feature": n.split[1], "position": n.split[2],
                         "children": list(n.children)})
             for nid, n in sorted(tree.nodes.items())}
            for tree in m.trees
        ],
        "boundaries": {str(pid): {f"{t}/{n}": [f, v] for (t, n), (f, v) in sorted(s.entries.items())}
                       for pid, s in fm.stores.items()},
    }
