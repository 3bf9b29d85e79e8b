"""Scalability harness: training time against party count, inference time against model size.

Absolute seconds depend on the machine; what the harness reports is the
trend.  Training data is fixed per run: every party count draws its feature
blocks from one pool, so adding a party adds columns and nothing else.
"""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass, field

import numpy as np

from .boost import BoostParams, oracle_train
from .errors import ConfigError
from .federated import FederatedModel, local_parties, predict, train
from .net import PartyTopology, connect

SERVERS = (100, 101, 102)


@dataclass(frozen=True)
class BenchConfig:
    parties: tuple[int, ...] = (2, 3, 4, 5, 6)
    n_samples: int = 400
    features_per_party: int = 8
    params: BoostParams = field(default_factory=lambda: BoostParams(n_trees=3, max_depth=3, n_bins=16))
    repeats: int = 3
    mode: str = "inprocess"
    seed: int = 0
    infer_trees: tuple[int, ...] = (2, 4, 8, 16)
    infer_depths: tuple[int, ...] = (2, 3, 4)
    infer_parties: int = 3
    infer_samples: int = 256

    def __post_init__(self):
        if not self.parties or min(self.parties) < 1:
            raise ConfigError("party counts must be positive")
        if self.repeats < 1:
            raise ConfigError("repeats must be at least 1")


@dataclass
class TrainRow:
    parties: int
    seconds: float  # median over repeats
    runs: list
    bytes_sent: int
    depth_seconds: dict


@dataclass
class InferRow:
    trees: int
    depth: int
    seconds_per_sample: float

    @property
    def size(self) -> int:
        return self.trees * self.depth


def bench_data(m: int, n: int, f: int, seed: int = 0) -> tuple[list[np.ndarray], np.ndarray]:
    """``m`` feature blocks of ``f`` columns and a label that depends on every block."""
    rng = np.random.default_rng(seed)
    blocks = [rng.normal(size=(n, f)) for _ in range(m)]
    y = sum(np.sin(b[:, 0]) + 0.5 * b[:, 1] for b in blocks) + 0.1 * rng.normal(size=n)
    return blocks, y


def topology(m: int) -> PartyTopology:
    return PartyTopology(0, tuple(range(1, m)), SERVERS)


def time_training(cfg: BenchConfig) -> list[TrainRow]:
    blocks, y = bench_data(max(cfg.parties), cfg.n_samples, cfg.features_per_party, cfg.seed)
    rows = []
    for m in cfg.parties:
        topo = topology(m)
        runs, nbytes, depth = [], 0, {}
        for _ in range(cfg.repeats):
            with connect(topo, cfg.mode) as mesh:
                t0 = time.perf_counter()
                train(mesh, local_parties(blocks[:m], topo), y, cfg.params, seed=cfg.seed)
                runs.append(time.perf_counter() - t0)
                nbytes = int(sum(mesh.metrics.bytes_sent.values()))
                depth = {k: v for k, v in mesh.metrics.phase_seconds.items() if k.startswith("depth_")}
        rows.append(TrainRow(m, statistics.median(runs), runs, nbytes, depth))
    return rows


def time_inference(cfg: BenchConfig) -> list[InferRow]:
    m = cfg.infer_parties
    blocks, y = bench_data(m, cfg.n_samples, cfg.features_per_party, cfg.seed)
    topo = topology(m)
    parties = local_parties([b[: cfg.infer_samples] for b in blocks], topo)
    rows = []
    for d in cfg.infer_depths:
        for t in cfg.infer_trees:
            # the plaintext engine yields the same trees and thresholds as the secure one
            params = BoostParams(n_trees=t, max_depth=d, n_bins=cfg.params.n_bins)
            model, stores = oracle_train(blocks, y, params, party_ids=topo.providers)
            fm = FederatedModel(model, stores)
            runs = []
            with connect(topo, cfg.mode) as mesh:
                for _ in range(cfg.repeats):
                    t0 = time.perf_counter()
                    predict(mesh, fm, parties)
                    runs.append(time.perf_counter() - t0)
            rows.append(InferRow(t, d, statistics.median(runs) / cfg.infer_samples))
    return rows


def non_decreasing(rows: list[TrainRow]) -> bool:
    s = [r.seconds for r in sorted(rows, key=lambda r: r.parties)]
    return all(b >= a for a, b in zip(s, s[1:]))


def growth_exponent(rows: list[InferRow]) -> float:
    """Least-squares slope of log(time per sample) on log(trees x depth); below 1 means sub-linear."""
    x = np.log([r.size for r in rows])
    y = np.log([r.seconds_per_sample for r in rows])
    return float(np.polyfit(x, y, 1)[0])


def training_table(rows: list[TrainRow]) -> str:
    depths = sorted({k for r in rows for k in r.depth_seconds}, key=lambda k: int(k.split("_")[1]))
    head = f"{'parties':>7}{'train_s':>10}{'bytes':>12}" + "".join(f"{k:>10}" for k in depths)
    lines = [head]
    for r in rows:
        lines.append(f"{r.parties:>7}{r.seconds:>10.3f}{r.bytes_sent:>12}"
                     + "".join(f"{r.depth_seconds.get(k, 0.0):>10.3f}" for k in depths))
    return "\n".join(lines)


def inference_table(rows: list[InferRow]) -> str:
    lines = [f"{'trees':>6}{'depth':>6}{'us/sample':>12}"]
    lines += [f"{r.trees:>6}{r.depth:>6}{r.seconds_per_sample * 1e6:>12.2f}" for r in rows]
    return "\n".join(lines)
