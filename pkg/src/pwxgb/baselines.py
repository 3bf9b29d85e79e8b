"""Forecast experiments: participant selection, feature assembly and the baseline roster.

Models are trained with the plaintext engine (:func:`pwxgb.boost.oracle_train`),
which the secure learner reproduces split for split; running the full
protocol here would only add time.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from sklearn.linear_model import Lasso

from .boost import BoostParams, oracle_predict, oracle_train
from .data import FarmSeries, FeatureFrame, LabelFrame, align, build_features
from .errors import ConfigError
from .metrics import mae, rmse
from .mmd import DEFAULT_MULTIPLIERS, DegenerateWarning, distance_adjacency, select_for_target, select_participants

ROSTER = (
    "Persistence",
    "Local_XGBoost_wo_nwp",
    "Local_XGBoost",
    "Lasso_wo_nwp",
    "Lasso",
    "pwXGBoost_wo_nwp_mmd",
    "pwXGBoost_wo_mmd",
    "pwXGBoost",
)


@dataclass(frozen=True)
class ExperimentConfig:
    M: int = 16
    N: int = 16
    horizons: tuple[int, ...] = (4, 8, 12, 16)
    train_frac: float = 0.8
    params: BoostParams = field(default_factory=BoostParams)
    beta: float = 0.85
    window: int = 16
    stride: int = 4
    history_days: int = 14
    multipliers: tuple[float, ...] = DEFAULT_MULTIPLIERS
    lasso_alpha: float = 5e-5
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.train_frac < 1:
            raise ConfigError("train_frac must lie in (0, 1)")


@dataclass
class Selection:
    mmd: list
    distance: list
    adjacency: object = None  # the MMD Adjacency behind ``mmd``


def select(series: Sequence[FarmSeries], target, cfg: ExperimentConfig, train_end: int | None = None) -> Selection:
    """Peers of ``target`` by MMD and by geographic distance, using training-period history only."""
    hist = [s.slice(0, train_end) if train_end else s for s in series]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateWarning)
        adj, by_mmd = select_for_target(hist, target, cfg.beta, cfg.window, cfg.stride, cfg.history_days,
                                      multipliers=cfg.multipliers, seed=cfg.seed)
        locs = [s.location for s in series]
        if any(loc is None for loc in locs):
            by_dist = []
        else:
            by_dist = select_participants(distance_adjacency(locs, cfg.beta, [s.farm_id for s in series]), target)
    return Selection(by_mmd, by_dist, adj)


def _columns(frame: FeatureFrame, M: int, with_nwp: bool) -> np.ndarray:
    return frame.X if with_nwp else frame.X[:, :M]


@dataclass
class Dataset:
    """Aligned per-farm feature blocks and target labels, split chronologically."""

    frames: dict
    labels: LabelFrame
    n_train: int

    def block(self, farm, M: int, with_nwp: bool, part: str) -> np.ndarray:
        X = _columns(self.frames[farm], M, with_nwp)
        return X[: self.n_train] if part == "train" else X[self.n_train:]

    def y(self, h: int, part: str) -> np.ndarray:
        v = self.labels.y[h]
        return v[: self.n_train] if part == "train" else v[self.n_train:]


def build_dataset(series: Sequence[FarmSeries], target, cfg: ExperimentConfig) -> Dataset:
    by_id = {s.farm_id: s for s in series}
    frames, labels = {}, None
    for fid, s in by_id.items():
        fr, lab = build_features(s, cfg.M, cfg.N, cfg.horizons if fid == target else ())
        frames[fid] = fr
        if fid == target:
            labels = lab
    ids = list(frames)
    aligned, labels = align([frames[i] for i in ids], labels)
    frames = dict(zip(ids, aligned))
    n_train = int(round(cfg.train_frac * len(labels.sample_index)))
    return Dataset(frames, labels, n_train)


def history_end(series: Sequence[FarmSeries], ds: Dataset) -> int:
    """Series length available at the last training origin."""
    origin = ds.labels.sample_index[ds.n_train - 1]
    return int(np.searchsorted(series[0].timestamps, origin)) + 1


def _xgb(ds: Dataset, farms: Sequence, M: int, with_nwp: bool, h: int, params: BoostParams) -> np.ndarray:
    tr = [ds.block(f, M, with_nwp, "train") for f in farms]
    te = [ds.block(f, M, with_nwp, "test") for f in farms]
    model, stores = oracle_train(tr, ds.y(h, "train"), params, party_ids=tuple(range(len(farms))))
    return oracle_predict(model, stores, te)


def _lasso(ds: Dataset, farms: Sequence, M: int, with_nwp: bool, h: int, alpha: float) -> np.ndarray:
    tr = np.hstack([ds.block(f, M, with_nwp, "train") for f in farms])
    te = np.hstack([ds.block(f, M, with_nwp, "test") for f in farms])
    mu, sd = tr.mean(axis=0), tr.std(axis=0)
    sd[sd == 0] = 1.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        model = Lasso(alpha=alpha, max_iter=20000).fit((tr - mu) / sd, ds.y(h, "train"))
    return model.predict((te - mu) / sd)


@dataclass
class Report:
    """``rows[model][horizon] = (rmse %, mae %)`` plus the participants used."""

    target: object
    rows: dict
    selection: Selection
    horizons: tuple

    def table(self) -> str:
        head = "Method".ljust(24) + "".join(f"{f'{h}-step RMSE':>16}{'MAE':>8}" for h in self.horizons)
        lines = [head]
        for name, per_h in self.rows.items():
            lines.append(name.ljust(24) + "".join(f"{per_h[h][0]:16.3f}{per_h[h][1]:8.3f}" for h in self.horizons))
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "target": self.target,
            "participants": {"mmd": list(self.selection.mmd), "distance": list(self.selection.distance)},
            "results": {m: {str(h): {"rmse": r[0], "mae": r[1]} for h, r in per.items()} for m, per in self.rows.items()},
        }


def compare_baselines(series: Sequence[FarmSeries], target, cfg: ExperimentConfig = ExperimentConfig(),
                      models: Sequence[str] = ROSTER, horizons: Sequence[int] | None = None) -> Report:
    unknown = set(models) - set(ROSTER)
    if unknown:
        raise ConfigError(f"unknown models {sorted(unknown)}")
    horizons = tuple(horizons or cfg.horizons)
    cfg = replace(cfg, horizons=horizons)
    ds = build_dataset(series, target, cfg)
    # selection sees only the history available at the end of the training period
    sel = select(series, target, cfg, history_end(series, ds))
    p = cfg.params
    M = cfg.M
    rows: dict = {}
    for name in models:
        rows[name] = {}
        for h in horizons:
            y_te = ds.y(h, "test")
            if name == "Persistence":
                pred = ds.block(target, M, False, "test")[:, -1]
            elif name == "Local_XGBoost_wo_nwp":
                pred = _xgb(ds, [target], M, False, h, p)
            elif name == "Local_XGBoost":
                pred = _xgb(ds, [target], M, True, h, p)
            elif name == "Lasso_wo_nwp":
                pred = _lasso(ds, [target, *sel.mmd], M, False, h, cfg.lasso_alpha)
            elif name == "Lasso":
                pred = _lasso(ds, [target, *sel.mmd], M, True, h, cfg.lasso_alpha)
            elif name == "pwXGBoost_wo_nwp_mmd":
                pred = _xgb(ds, [target, *sel.mmd], M, False, h, p)
            elif name == "pwXGBoost_wo_mmd":
                pred = _xgb(ds, [target, *sel.distance], M, True, h, p)
            else:
                pred = _xgb(ds, [target, *sel.mmd], M, True, h, p)
            rows[name][h] = (rmse(y_te, pred), mae(y_te, pred))
    return Report(target, rows, sel, horizons)
