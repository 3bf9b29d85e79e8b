"""Full model roster on synthetic clusters, one table per seed plus medians.

    python3 scripts/compare.py --seeds 3 --days 60 --corr 0.9
"""

import argparse
import statistics

from pwxgb.baselines import ROSTER, ExperimentConfig, compare_baselines
from pwxgb.data import synth_cluster


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, default=3)
    ap.add_argument("--days", type=int, default=60)
    ap.add_argument("--farms", type=int, default=8)
    ap.add_argument("--correlated", type=int, default=5)
    ap.add_argument("--corr", type=float, default=0.9)
    ap.add_argument("--horizons", type=int, nargs="+", default=[4, 8, 12, 16])
    args = ap.parse_args()

    per_model = {m: {h: [] for h in args.horizons} for m in ROSTER}
    for seed in range(args.seeds):
        farms = synth_cluster(args.farms, args.days * 96, args.corr, seed, n_correlated=args.correlated)
        rep = compare_baselines(farms, 0, ExperimentConfig(seed=seed), horizons=tuple(args.horizons))
        print(f"# seed {seed}: mmd peers {rep.selection.mmd}, distance peers {rep.selection.distance}")
        print(rep.table(), flush=True)
        for m, row in rep.rows.items():
            for h, (r, _) in row.items():
                per_model[m][h].append(r)
    print(f"\n# median RMSE (%) over {args.seeds} seeds")
    print("Method".ljust(24) + "".join(f"{h:>10}" for h in args.horizons))
    for m, row in per_model.items():
        print(m.ljust(24) + "".join(f"{statistics.median(row[h]):10.3f}" for h in args.horizons))


if __name__ == "__main__":
    main()
