"""Wind-farm series: ingestion, lagged feature construction and a synthetic cluster.

All series live on a regular 15-minute grid; missing steps are kept as NaN
so that feature rows touching a gap can be dropped rather than imputed.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import lfilter

from .errors import EmptyIntersectionError, FormatError, GridError, LengthError, RangeError

STEP = np.timedelta64(15, "m")
STEPS_PER_DAY = 96
CAPACITY_TOLERANCE = 0.01


@dataclass
class FarmSeries:
    farm_id: int | str
    timestamps: np.ndarray  # datetime64[ns], regular 15-min grid
    power: np.ndarray  # normalised by capacity, NaN on gaps
    capacity: float
    nwp: np.ndarray  # (T, k)
    nwp_names: tuple[str, ...] = ()
    location: tuple[float, float] | None = None

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype="datetime64[ns]")
        self.power = np.asarray(self.power, dtype=np.float64)
        self.nwp = np.asarray(self.nwp, dtype=np.float64).reshape(len(self.power), -1)
        if not self.nwp_names:
            self.nwp_names = tuple(f"nwp_{i + 1}" for i in range(self.nwp.shape[1]))

    def __len__(self) -> int:
        return len(self.power)

    @property
    def k(self) -> int:
        return self.nwp.shape[1]

    @property
    def gap_mask(self) -> np.ndarray:
        return np.isnan(self.power) | np.isnan(self.nwp).any(axis=1)

    def slice(self, start: int, stop: int) -> "FarmSeries":
        return FarmSeries(self.farm_id, self.timestamps[start:stop], self.power[start:stop], self.capacity,
                          self.nwp[start:stop], self.nwp_names, self.location)

    def to_csv(self, path: str | Path) -> None:
        """Write in the ingest schema (power back in MW)."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["timestamp", "power", *[f"nwp_{i + 1}" for i in range(self.k)]])
            for t, p, row in zip(self.timestamps, self.power, self.nwp):
                if np.isnan(p):
                    continue
                stamp = pd.Timestamp(t).isoformat()
                w.writerow([stamp, repr(float(p * self.capacity)), *[repr(float(v)) for v in row]])


@dataclass
class FeatureFrame:
    X: np.ndarray
    feature_names: list[str]
    sample_index: np.ndarray  # datetime64[ns] of the forecast origin t
    party: int | str | None = None

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def take(self, rows) -> "FeatureFrame":
        return FeatureFrame(self.X[rows], list(self.feature_names), self.sample_index[rows], self.party)


@dataclass
class LabelFrame:
    y: dict[int, np.ndarray]
    horizon_steps: tuple[int, ...]
    sample_index: np.ndarray = field(default_factory=lambda: np.array([], dtype="datetime64[ns]"))

    def take(self, rows) -> "LabelFrame":
        return LabelFrame({h: v[rows] for h, v in self.y.items()}, self.horizon_steps, self.sample_index[rows])


# ---------------------------------------------------------------------------
# ingestion


def ingest_csv(path: str | Path, capacity: float, farm_id: int | str | None = None) -> FarmSeries:
    """Read ``timestamp,power,nwp_1..nwp_k`` and normalise power by ``capacity``.

    Power up to 1% outside ``[0, capacity]`` is clipped; anything further out
    is rejected.  Missing grid steps are kept as NaN rows.
    """
    if capacity <= 0:
        raise RangeError("capacity must be positive")
    path = Path(path)
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise FormatError(f"{path}: {exc}") from None
    cols = [c.strip() for c in df.columns]
    if len(cols) < 2 or cols[0] != "timestamp" or cols[1] != "power":
        raise FormatError(f"{path}: header must start with 'timestamp,power', got {cols[:2]}")
    nwp_cols = cols[2:]
    for i, c in enumerate(nwp_cols):
        if c != f"nwp_{i + 1}":
            raise FormatError(f"{path}: expected column nwp_{i + 1}, got {c!r}")
    if df.empty:
        raise FormatError(f"{path}: no data rows")
    try:
        stamps = pd.to_datetime(df.iloc[:, 0], format="ISO8601")
    except (ValueError, TypeError) as exc:
        raise FormatError(f"{path}: bad timestamp ({exc})") from None
    if getattr(stamps.dt, "tz", None) is not None:
        stamps = stamps.dt.tz_convert("UTC").dt.tz_localize(None)
    try:
        values = df.iloc[:, 1:].astype(np.float64).to_numpy()
    except ValueError as exc:
        raise FormatError(f"{path}: non-numeric value ({exc})") from None

    ts = stamps.to_numpy(dtype="datetime64[ns]")
    if np.any(ts[1:] == ts[:-1]):
        dup = ts[1:][ts[1:] == ts[:-1]][0]
        raise GridError(f"{path}: duplicate timestamp {pd.Timestamp(dup)}")
    if np.any(ts[1:] < ts[:-1]):
        raise GridError(f"{path}: timestamps are not increasing")
    offsets = (ts - ts[0]).astype("timedelta64[ns]").astype(np.int64)
    step_ns = int(STEP.astype("timedelta64[ns]").astype(np.int64))
    if np.any(offsets % step_ns != 0):
        raise GridError(f"{path}: timestamp off the 15-minute grid")

    power = values[:, 0]
    lo, hi = -CAPACITY_TOLERANCE * capacity, (1 + CAPACITY_TOLERANCE) * capacity
    if np.any(power < lo) or np.any(power > hi):
        raise RangeError(f"{path}: power outside [0, capacity] beyond {CAPACITY_TOLERANCE:.0%}")
    power = np.clip(power, 0.0, capacity) / capacity

    n = int(offsets[-1] // step_ns) + 1
    pos = offsets // step_ns
    full_p = np.full(n, np.nan)
    full_v = np.full((n, len(nwp_cols)), np.nan)
    full_p[pos] = power
    full_v[pos] = values[:, 1:]
    grid = ts[0] + np.arange(n) * STEP.astype("timedelta64[ns]")
    return FarmSeries(farm_id if farm_id is not None else path.stem, grid, full_p, float(capacity), full_v,
                      tuple(nwp_cols))


# ---------------------------------------------------------------------------
# features


def build_features(s: FarmSeries, M: int, N: int, horizons: Sequence[int] = ()) -> tuple[FeatureFrame, LabelFrame | None]:
    """Lagged power and future NWP for every forecast origin ``t``.

    Row ``t`` holds ``P[t-M+1..t]`` (oldest first) then ``V[t+1..t+N]``
    step-major with the ``k`` variables inside each step.  Labels are
    ``P[t+h]``.  Rows touching a gap are dropped.
    """
    if M < 1 or N < 0:
        raise LengthError("need M >= 1 and N >= 0")
    horizons = tuple(int(h) for h in horizons)
    if any(h < 1 for h in horizons):
        raise LengthError("horizons are positive step counts")
    T = len(s)
    reach = max([N, *horizons]) if horizons or N else 0
    n_rows = T - M - reach + 1
    if n_rows <= 0:
        raise LengthError(f"series of length {T} too short for M={M}, reach={reach}")
    origins = np.arange(M - 1, M - 1 + n_rows)
    lags = sliding_window_view(s.power, M)[:n_rows]  # rows start at t-M+1
    parts = [lags]
    names = [f"{s.farm_id}:P[t-{M - 1 - i}]" if M - 1 - i else f"{s.farm_id}:P[t]" for i in range(M)]
    if N:
        k = s.k
        fut = np.stack([s.nwp[origins + n] for n in range(1, N + 1)], axis=1)  # (rows, N, k)
        parts.append(fut.reshape(n_rows, N * k))
        names += [f"{s.farm_id}:{s.nwp_names[v]}[t+{n}]" for n in range(1, N + 1) for v in range(k)]
    X = np.concatenate(parts, axis=1)
    keep = ~np.isnan(X).any(axis=1)
    labels = None
    if horizons:
        y = {h: s.power[origins + h] for h in horizons}
        for v in y.values():
            keep &= ~np.isnan(v)
        labels = LabelFrame({h: v[keep] for h, v in y.items()}, horizons, s.timestamps[origins][keep])
    frame = FeatureFrame(X[keep], names, s.timestamps[origins][keep], s.farm_id)
    return frame, labels


def align(frames: Sequence[FeatureFrame], labels: LabelFrame | None = None):
    """Restrict every frame (and the labels) to the common sample index, in time order."""
    if not frames:
        raise EmptyIntersectionError("nothing to align")
    common = frames[0].sample_index
    for f in frames[1:]:
        common = np.intersect1d(common, f.sample_index)
    if labels is not None:
        common = np.intersect1d(common, labels.sample_index)
    if common.size == 0:
        raise EmptyIntersectionError("frames share no sample timestamps")
    out = [f.take(_positions(f.sample_index, common)) for f in frames]
    if labels is None:
        return out
    return out, labels.take(_positions(labels.sample_index, common))


def _positions(index: np.ndarray, wanted: np.ndarray) -> np.ndarray:
    order = np.argsort(index, kind="stable")
    return order[np.searchsorted(index[order], wanted)]


# ---------------------------------------------------------------------------
# synthetic cluster


SYNOPTIC_TAU = 4 * STEPS_PER_DAY
SYNOPTIC_WEIGHT = 0.0
CLIMATE_SHIFT = (3.5, 3.5)  # mean-speed deficit band (m/s) of farms outside the cluster


def _ar1(rng: np.random.Generator, n: int, tau: float) -> np.ndarray:
    """Stationary unit-variance AR(1) with correlation time ``tau`` steps."""
    phi = np.exp(-1.0 / tau)
    eps = rng.standard_normal(n) * np.sqrt(1 - phi**2)
    z0 = rng.standard_normal()
    out, _ = lfilter([1.0], [1.0, -phi], eps, zi=[phi * z0])
    return out


def power_curve(speed: np.ndarray, cut_in: float = 3.0, rated: float = 12.0, cut_out: float = 25.0) -> np.ndarray:
    p = np.clip((speed - cut_in) / (rated - cut_in), 0.0, 1.0) ** 3
    return np.where(speed >= cut_out, 0.0, p)


def _wind_anomaly(rng: np.random.Generator, n: int, tau: float, synoptic_tau: float, synoptic_weight: float) -> np.ndarray:
    """Unit-variance mix of a fast AR(1) and a slow multi-day (synoptic) AR(1)."""
    w = synoptic_weight
    return np.sqrt(1 - w) * _ar1(rng, n, tau) + np.sqrt(w) * _ar1(rng, n, synoptic_tau)


def synth_cluster(n_farms: int, T: int, spatial_corr: float, seed: int, n_correlated: int | None = None,
                  max_lag: int = 8, tau: float = 24.0, synoptic_tau: float = SYNOPTIC_TAU,
                  synoptic_weight: float = SYNOPTIC_WEIGHT, climate_shift: tuple[float, float] = CLIMATE_SHIFT,
                  capacity: float = 100.0,
                  start: str = "2021-01-01") -> list[FarmSeries]:
    """Farms driven by a shared regional wind process.

    The first ``n_correlated`` farms mix the regional process (weight
    ``spatial_corr``) with their own noise; the regional signal reaches farm
    0 last (lag ``max_lag``) and the others earlier, so their history leads
    farm 0.  Remaining farms follow independent processes under their own
    climate, their mean wind speed lowered by a draw from ``climate_shift``.  NWP is a noisy
    forecast of each farm's own wind: speed plus sin/cos of direction.
    Locations are uniform in a 100 km square, independent of correlation.
    """
    if not 0 <= spatial_corr < 1:
        raise ValueError("spatial_corr must lie in [0, 1)")
    if n_correlated is None:
        n_correlated = n_farms
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xC1A5]))
    regional = _wind_anomaly(rng, T + max_lag, tau, synoptic_tau, synoptic_weight)
    regional_dir = np.cumsum(rng.standard_normal(T + max_lag) * 0.05)
    lags = np.concatenate([[max_lag], rng.integers(0, max_lag, size=max(n_farms - 1, 0))])
    t_axis = np.arange(T)
    diurnal = 0.8 * np.sin(2 * np.pi * (t_axis % STEPS_PER_DAY) / STEPS_PER_DAY)
    grid = np.datetime64(start, "ns") + t_axis * STEP.astype("timedelta64[ns]")
    farms = []
    for i in range(n_farms):
        if i < n_correlated:
            # local turbulence around the shared regional weather
            own = _ar1(rng, T, tau)
            shifted = regional[max_lag - lags[i]: max_lag - lags[i] + T]
            z = np.sqrt(spatial_corr) * shifted + np.sqrt(1 - spatial_corr) * own
            direction = regional_dir[max_lag - lags[i]: max_lag - lags[i] + T]
        else:
            z = _wind_anomaly(rng, T, tau, synoptic_tau, synoptic_weight)
            direction = np.cumsum(rng.standard_normal(T) * 0.05)
        mean_speed = 7.5 + rng.uniform(-0.5, 0.5)
        if i >= n_correlated:
            # a different, calmer regional climate
            mean_speed -= rng.uniform(*climate_shift)
        speed = np.maximum(mean_speed + 3.0 * z + diurnal, 0.0)
        power = np.clip(power_curve(speed) + 0.01 * rng.standard_normal(T), 0.0, 1.0)
        fc_speed = np.maximum(speed + 1.0 * _ar1(rng, T, 24.0), 0.0)
        fc_dir = direction + 0.2 * rng.standard_normal(T)
        nwp = np.column_stack([fc_speed, np.sin(fc_dir), np.cos(fc_dir)])
        loc = (float(rng.uniform(0, 100)), float(rng.uniform(0, 100)))
        farms.append(FarmSeries(i, grid, power, capacity, nwp, ("wind_speed", "dir_sin", "dir_cos"), loc))
    return farms
