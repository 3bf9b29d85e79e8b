"""``pwxgb`` command line: synth, ingest, select, train, predict, eval, compare, bench.

Every subcommand reads an INI run config (``--config``); ``--show-config``
prints the effective values, defaults included.  Failures print one JSON
object on stderr and exit with 2 (config), 3 (data), 4 (transport) or 5.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np
import pandas as pd

from . import bench as benchmod
from . import model_io
from .baselines import ROSTER, ExperimentConfig, build_dataset, compare_baselines, history_end, select
from .config import RunConfig, load_config
from .data import STEPS_PER_DAY, ingest_csv, synth_cluster
from .errors import ConfigError, PwxgbError
from .federated import local_parties, predict, train
from .metrics import mae, rmse
from .net import PartyTopology, connect

RUN_META = "run.json"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


# ---------------------------------------------------------------------------
# helpers


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _experiment(cfg: RunConfig) -> ExperimentConfig:
    d, s = cfg.data, cfg.select
    return ExperimentConfig(M=d.M, N=d.N, horizons=d.horizons, train_frac=d.train_frac, params=cfg.boost,
                            beta=s.beta, window=s.window, stride=s.stride, history_days=s.history_days,
                            multipliers=s.multipliers, seed=cfg.seed)


def _series(cfg: RunConfig) -> list:
    d = cfg.data
    if not d.paths:
        raise ConfigError("no data paths configured ([data] paths)")
    out = []
    for fid, path in d.paths.items():
        if fid not in d.capacity:
            raise ConfigError(f"no capacity for farm {fid}")
        s = ingest_csv(path, d.capacity[fid], fid)
        s.location = d.locations.get(fid)
        out.append(s)
    return out


def _target(cfg: RunConfig, args, series) -> int:
    target = args.target if args.target is not None else cfg.topology.active
    if target not in {s.farm_id for s in series}:
        raise ConfigError(f"target {target} is not among the configured farms")
    return target


def _topology(cfg: RunConfig, target, peers) -> PartyTopology:
    return PartyTopology(target, tuple(peers), cfg.topology.servers)


def _mode(cfg: RunConfig, args) -> str:
    return "tcp" if getattr(args, "tcp", False) else cfg.topology.mode


def _peers(cfg, args, series, target, ds) -> list:
    if cfg.topology.passives:
        return list(cfg.topology.passives)
    if args.selection == "none":
        return []
    sel = select(series, target, _experiment(cfg), history_end(series, ds))
    return sel.mmd if args.selection == "mmd" else sel.distance


def _emit(obj, out: str | None) -> None:
    text = json.dumps(obj, indent=2, default=_json_default)
    if out:
        Path(out).write_text(text + "\n")
    print(text)


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serialisable: {type(o).__name__}")


def _metrics(mesh) -> dict:
    snap = mesh.metrics.snapshot()
    return {"phase_seconds": snap["phase_seconds"], "bytes_sent": snap["total_bytes"]}


def _range(text: str) -> tuple[int, ...]:
    try:
        if ".." in text:
            a, b = text.split("..")
            return tuple(range(int(a), int(b) + 1))
        return tuple(int(x) for x in text.split(","))
    except ValueError:
        raise ConfigError(f"bad party range {text!r}; use 2..6 or 2,3,4") from None


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = _config(args)
    farms = synth_cluster(args.farms, args.days * STEPS_PER_DAY, args.corr, cfg.seed,
                          n_correlated=args.correlated, capacity=args.capacity)
    paths, caps, locs = {}, {}, {}
    for f in farms:
        p = out / f"farm_{f.farm_id}.csv"
        f.to_csv(p)
        paths[f.farm_id], caps[f.farm_id], locs[f.farm_id] = str(p), f.capacity, f.location
    cfg = replace(cfg, data=replace(cfg.data, paths=paths, capacity=caps, locations=locs),
                  topology=replace(cfg.topology, active=farms[0].farm_id))
    (out / "config.ini").write_text(cfg.to_ini())
    _emit({"config": str(out / "config.ini"), "farms": len(farms)}, None)
    return 0


def cmd_ingest(args) -> int:
    cfg = _config(args)
    series = _series(cfg)
    summary = {}
    for s in series:
        summary[str(s.farm_id)] = {
            "rows": len(s), "gaps": int(s.gap_mask.sum()), "nwp_vars": s.k,
            "start": str(pd.Timestamp(s.timestamps[0])), "end": str(pd.Timestamp(s.timestamps[-1])),
        }
    if args.cache:
        arrays = {}
        for s in series:
            arrays[f"{s.farm_id}/timestamps"] = s.timestamps.astype(np.int64)
            arrays[f"{s.farm_id}/power"] = s.power
            arrays[f"{s.farm_id}/nwp"] = s.nwp
        np.savez_compressed(args.cache, **arrays)
    _emit({"farms": summary}, args.out)
    return 0


def cmd_select(args) -> int:
    cfg = _config(args)
    series = _series(cfg)
    target = _target(cfg, args, series)
    exp = _experiment(cfg)
    ds = build_dataset(series, target, exp)
    sel = select(series, target, exp, history_end(series, ds))
    adj = sel.adjacency
    _emit({
        "target": target,
        "participants": {"mmd": sel.mmd, "distance": sel.distance},
        "adjacency": {"farm_ids": list(adj.farm_ids), "A": adj.A, "mmd2": adj.distances,
                      "beta": adj.beta, "sigma": adj.sigma, "mean": adj.mean},
    }, args.out)
    return 0


def _prepare(cfg, args):
    series = _series(cfg)
    target = _target(cfg, args, series)
    ds = build_dataset(series, target, _experiment(cfg))
    return series, target, ds


def cmd_train(args) -> int:
    cfg = _config(args)
    series, target, ds = _prepare(cfg, args)
    h = args.horizon or cfg.data.horizons[0]
    if h not in ds.labels.y:
        raise ConfigError(f"horizon {h} not in configured horizons {cfg.data.horizons}")
    peers = _peers(cfg, args, series, target, ds)
    topo = _topology(cfg, target, peers)
    blocks = [ds.block(f, cfg.data.M, not args.no_nwp, "train") for f in topo.providers]
    with connect(topo, _mode(cfg, args), cfg.topology.addresses) as mesh:
        fm = train(mesh, local_parties(blocks, topo), ds.y(h, "train"), cfg.boost, seed=cfg.seed)
        stats = _metrics(mesh)
    paths = model_io.save(fm, args.out)
    meta = {"target": target, "participants": list(topo.providers), "horizon": h, "with_nwp": not args.no_nwp,
            "M": cfg.data.M, "N": cfg.data.N, "train_rows": ds.n_train}
    (Path(args.out) / RUN_META).write_text(json.dumps(meta, indent=2) + "\n")
    _emit({**meta, "files": [str(p) for p in paths], **stats}, None)
    return 0


def cmd_predict(args) -> int:
    cfg = _config(args)
    fm = model_io.load(args.model)
    try:
        meta = json.loads((Path(args.model) / RUN_META).read_text())
    except FileNotFoundError:
        raise ConfigError(f"{args.model} has no {RUN_META}") from None
    if (cfg.data.M, cfg.data.N) != (meta["M"], meta["N"]):
        raise ConfigError("config window lengths differ from the ones the model was trained with")
    args.target = meta["target"]
    series, target, ds = _prepare(cfg, args)
    h = meta["horizon"]
    topo = _topology(cfg, target, meta["participants"][1:])
    rows = slice(0, None) if args.part == "all" else (slice(0, ds.n_train) if args.part == "train"
                                                        else slice(ds.n_train, None))
    blocks = [ds.frames[f].X[:, : cfg.data.M] if not meta["with_nwp"] else ds.frames[f].X
              for f in topo.providers]
    blocks = [b[rows] for b in blocks]
    with connect(topo, _mode(cfg, args), cfg.topology.addresses) as mesh:
        pred = predict(mesh, fm, local_parties(blocks, topo))
    origin = ds.labels.sample_index[rows]
    actual = ds.labels.y[h][rows]
    step = np.timedelta64(15 * h, "m")
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["origin", "valid_time", "prediction", "actual"])
        for t, p, a in zip(origin, pred, actual):
            w.writerow([pd.Timestamp(t).isoformat(), pd.Timestamp(t + step).isoformat(), repr(float(p)),
                        repr(float(a))])
    _emit({"predictions": args.out, "rows": len(pred), "rmse": rmse(actual, pred), "mae": mae(actual, pred)}, None)
    return 0


def cmd_eval(args) -> int:
    cfg = _config(args)
    series, target, ds = _prepare(cfg, args)
    peers = _peers(cfg, args, series, target, ds)
    topo = _topology(cfg, target, peers)
    horizons = tuple(args.horizons) if args.horizons else cfg.data.horizons
    M = cfg.data.M
    results, phases, nbytes = {}, {}, 0
    with connect(topo, _mode(cfg, args), cfg.topology.addresses) as mesh:
        for h in horizons:
            tr = local_parties([ds.block(f, M, True, "train") for f in topo.providers], topo)
            te = local_parties([ds.block(f, M, True, "test") for f in topo.providers], topo)
            fm = train(mesh, tr, ds.y(h, "train"), cfg.boost, seed=cfg.seed)
            pred = predict(mesh, fm, te)
            y = ds.y(h, "test")
            results[str(h)] = {"rmse": rmse(y, pred), "mae": mae(y, pred)}
        stats = _metrics(mesh)
    report = {"target": target, "participants": list(topo.providers), "party_count": topo.m,
              "results": results, "phase_seconds": stats["phase_seconds"], "bytes_sent": stats["bytes_sent"]}
    head = "Method".ljust(24) + "".join(f"{f'{h}-step RMSE':>16}{'MAE':>8}" for h in horizons)
    row = "pwXGBoost".ljust(24) + "".join(f"{results[str(h)]['rmse']:16.3f}{results[str(h)]['mae']:8.3f}"
                                          for h in horizons)
    print(head + "\n" + row, file=sys.stderr)
    _emit(report, args.out)
    return 0


def cmd_compare(args) -> int:
    cfg = _config(args)
    series = _series(cfg)
    target = _target(cfg, args, series)
    models = tuple(args.models.split(",")) if args.models else ROSTER
    rep = compare_baselines(series, target, _experiment(cfg), models, args.horizons or None)
    print(f"# Lasso: alpha={_experiment(cfg).lasso_alpha}, standardised features, max_iter=20000", file=sys.stderr)
    print(rep.table(), file=sys.stderr)
    _emit(rep.to_dict(), args.out)
    return 0


def cmd_bench(args) -> int:
    cfg = _config(args)
    params = replace(cfg.boost, n_trees=args.trees, max_depth=args.depth, n_bins=args.bins)
    bc = benchmod.BenchConfig(parties=_range(args.parties), n_samples=args.samples,
                              features_per_party=args.features, params=params, repeats=args.repeats,
                              mode=_mode(cfg, args), seed=cfg.seed)
    rows = benchmod.time_training(bc)
    print(benchmod.training_table(rows), file=sys.stderr)
    out = {"training": [asdict(r) for r in rows], "training_non_decreasing": benchmod.non_decreasing(rows)}
    if not args.skip_inference:
        inf = benchmod.time_inference(bc)
        print(benchmod.inference_table(inf), file=sys.stderr)
        out["inference"] = [asdict(r) for r in inf]
        out["inference_growth_exponent"] = benchmod.growth_exponent(inf)
    _emit(out, args.out)
    return 0


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="INI run config")
    common.add_argument("--seed", type=int, help="override [run] seed")

    p = _Parser(prog="pwxgb", description="Privacy-preserving vertical XGBoost for wind power forecasting.")
    p.add_argument("--config", help="INI run config (for --show-config)")
    p.add_argument("--show-config", action="store_true", help="print the effective config with all defaults")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("synth", parents=[common], help="write a synthetic farm cluster and its config")
    s.add_argument("--out", required=True)
    s.add_argument("--farms", type=int, default=8)
    s.add_argument("--correlated", type=int, default=5)
    s.add_argument("--days", type=int, default=60)
    s.add_argument("--corr", type=float, default=0.9, help="spatial correlation of the cluster")
    s.add_argument("--capacity", type=float, default=100.0)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("ingest", parents=[common], help="validate farm CSVs")
    s.add_argument("--cache", help="write the validated series to this .npz")
    s.add_argument("--out", help="also write the summary JSON here")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("select", parents=[common], help="MMD adjacency and participants of a target")
    s.add_argument("--target", type=int)
    s.add_argument("--out")
    s.set_defaults(func=cmd_select)

    for name, func, hlp in (("train", cmd_train, "secure training of one horizon"),
                            ("eval", cmd_eval, "secure train and test per horizon")):
        s = sub.add_parser(name, parents=[common], help=hlp)
        s.add_argument("--target", type=int)
        s.add_argument("--selection", choices=("mmd", "distance", "none"), default="mmd",
                       help="peer choice when [topology] passives is empty")
        s.add_argument("--tcp", action="store_true", help="loopback TCP channels instead of in-process")
        s.set_defaults(func=func)
        if name == "train":
            s.add_argument("--horizon", type=int)
            s.add_argument("--no-nwp", action="store_true")
            s.add_argument("--out", required=True, help="model directory")
        else:
            s.add_argument("--horizons", type=int, nargs="+")
            s.add_argument("--out")

    s = sub.add_parser("predict", parents=[common], help="secure inference with a trained model")
    s.add_argument("--model", required=True)
    s.add_argument("--part", choices=("test", "train", "all"), default="test")
    s.add_argument("--tcp", action="store_true")
    s.add_argument("--out", required=True, help="prediction CSV")
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("compare", parents=[common], help="baseline roster table (plaintext engine)")
    s.add_argument("--target", type=int)
    s.add_argument("--models", help=f"comma list from {','.join(ROSTER)}")
    s.add_argument("--horizons", type=int, nargs="+")
    s.add_argument("--out")
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("bench", parents=[common], help="training and inference timing")
    s.add_argument("--parties", default="2..6")
    s.add_argument("--repeats", type=int, default=3)
    s.add_argument("--samples", type=int, default=400)
    s.add_argument("--features", type=int, default=8)
    s.add_argument("--trees", type=int, default=3)
    s.add_argument("--depth", type=int, default=3)
    s.add_argument("--bins", type=int, default=16)
    s.add_argument("--tcp", action="store_true")
    s.add_argument("--skip-inference", action="store_true")
    s.add_argument("--out")
    s.set_defaults(func=cmd_bench)
    return p


def _fail(exc: BaseException, code: int) -> int:
    print(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": code}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.show_config:
            print(_config(args).to_ini())
            return 0
        if not args.command:
            raise ConfigError("no subcommand given; see pwxgb --help")
        return args.func(args)
    except PwxgbError as e:
        return _fail(e, e.exit_code)
    except Exception as e:  # noqa: BLE001 - mapped to the internal-error exit code
        return _fail(e, 5)


if __name__ == "__main__":
    sys.exit(main())
