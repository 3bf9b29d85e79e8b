"""Run configuration: INI sections mapped onto dataclasses."""

from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .boost import BoostParams
from .errors import ConfigError
from .mmd import DEFAULT_MULTIPLIERS


@dataclass(frozen=True)
class TopologyConfig:
    active: int = 0
    passives: tuple[int, ...] = ()
    servers: tuple[int, int, int] = (100, 101, 102)
    mode: str = "inprocess"
    addresses: dict = field(default_factory=dict)  # party id -> (host, port), tcp mode only

    def __post_init__(self):
        if self.mode not in ("inprocess", "tcp"):
            raise ConfigError(f"unknown transport mode {self.mode!r}")


@dataclass(frozen=True)
class DataConfig:
    paths: dict = field(default_factory=dict)  # farm id -> CSV path
    capacity: dict = field(default_factory=dict)  # farm id -> MW
    locations: dict = field(default_factory=dict)  # farm id -> (x, y) km, for distance selection
    M: int = 16
    N: int = 16
    horizons: tuple[int, ...] = (4, 8, 12, 16)
    train_frac: float = 0.8


@dataclass(frozen=True)
class SelectConfig:
    beta: float = 0.85
    window: int = 16
    stride: int = 4
    history_days: int = 14
    multipliers: tuple[float, ...] = DEFAULT_MULTIPLIERS


@dataclass(frozen=True)
class RunConfig:
    topology: TopologyConfig = field(default_factory=TopologyConfig)
    data: DataConfig = field(default_factory=DataConfig)
    boost: BoostParams = field(default_factory=BoostParams)
    select: SelectConfig = field(default_factory=SelectConfig)
    seed: int = 0

    def to_ini(self) -> str:
        cp = configparser.ConfigParser()
        cp.optionxform = str
        cp["run"] = {"seed": str(self.seed)}
        for name in ("topology", "data", "boost", "select"):
            section = {}
            for k, v in asdict(getattr(self, name)).items():
                section[k] = _fmt(v)
            cp[name] = section
        lines = []
        for sec in cp.sections():
            lines.append(f"[{sec}]")
            lines += [f"{k} = {v}" for k, v in cp[sec].items()]
            lines.append("")
        return "\n".join(lines)


def _fmt(v) -> str:
    if isinstance(v, dict):
        # map values that are pairs (host:port, x:y) use a colon
        return ", ".join(f"{k}={':'.join(map(str, x)) if isinstance(x, (tuple, list)) else x}" for k, x in v.items())
    if isinstance(v, (tuple, list)):
        return " ".join(str(x) for x in v)
    return str(v)


def _parse_seq(text: str, cast):
    return tuple(cast(x) for x in text.replace(",", " ").split())


def _parse_map(text: str, cast):
    out = {}
    for item in filter(None, (s.strip() for s in text.split(","))):
        if "=" not in item:
            raise ConfigError(f"expected key=value, got {item!r}")
        k, v = item.split("=", 1)
        k = k.strip()
        out[int(k) if k.lstrip("-").isdigit() else k] = cast(v.strip())
    return out


def _address(v: str) -> tuple[str, int]:
    host, _, port = v.rpartition(":")
    return host, int(port)


def _point(v: str) -> tuple[float, float]:
    x, _, y = v.partition(":")
    return float(x), float(y)


_PARSERS = {
    ("topology", "active"): int,
    ("topology", "passives"): lambda s: _parse_seq(s, int),
    ("topology", "servers"): lambda s: _parse_seq(s, int),
    ("topology", "mode"): str,
    ("topology", "addresses"): lambda s: _parse_map(s, _address),
    ("data", "paths"): lambda s: _parse_map(s, str),
    ("data", "capacity"): lambda s: _parse_map(s, float),
    ("data", "locations"): lambda s: _parse_map(s, _point),
    ("data", "M"): int,
    ("data", "N"): int,
    ("data", "horizons"): lambda s: _parse_seq(s, int),
    ("data", "train_frac"): float,
    ("boost", "n_trees"): int,
    ("boost", "max_depth"): int,
    ("boost", "n_bins"): int,
    ("boost", "gamma"): float,
    ("boost", "reg_lambda"): float,
    ("boost", "eta"): float,
    ("boost", "loss"): str,
    ("select", "beta"): float,
    ("select", "window"): int,
    ("select", "stride"): int,
    ("select", "history_days"): int,
    ("select", "multipliers"): lambda s: _parse_seq(s, float),
}

_SECTIONS = {"topology": TopologyConfig, "data": DataConfig, "boost": BoostParams, "select": SelectConfig}


def load_config(path: str | Path | None = None, text: str | None = None) -> RunConfig:
    """Read an INI file (or string); unknown sections or keys are errors, missing ones keep defaults."""
    cp = configparser.ConfigParser()
    cp.optionxform = str
    try:
        if text is not None:
            cp.read_string(text)
        elif path is not None:
            with open(path) as fh:
                cp.read_file(fh)
    except (OSError, configparser.Error) as e:
        raise ConfigError(f"cannot read config: {e}") from None
    parts = {}
    seed = 0
    for sec in cp.sections():
        if sec == "run":
            for k, v in cp[sec].items():
                if k != "seed":
                    raise ConfigError(f"unknown key [run] {k}")
                seed = int(v)
            continue
        if sec not in _SECTIONS:
            raise ConfigError(f"unknown section [{sec}]")
        known = {f.name for f in fields(_SECTIONS[sec])}
        kw = {}
        for k, v in cp[sec].items():
            if k not in known:
                raise ConfigError(f"unknown key [{sec}] {k}")
            try:
                kw[k] = _PARSERS[(sec, k)](v)
            except ValueError as e:
                raise ConfigError(f"bad value for [{sec}] {k}: {e}") from None
        try:
            parts[sec] = _SECTIONS[sec](**kw)
        except TypeError as e:
            raise ConfigError(str(e)) from None
    return RunConfig(seed=seed, **parts)
