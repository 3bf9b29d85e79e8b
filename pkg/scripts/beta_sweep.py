"""How the adjacency threshold beta changes the selected peer set.

For each beta, counts seeds where MMD selection returns exactly the
correlated peers, and the mean number of false and missed peers.

    python3 scripts/beta_sweep.py --seeds 20
"""

import argparse
import warnings

import numpy as np

from pwxgb.data import synth_cluster
from pwxgb.mmd import DegenerateWarning, select_for_target


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--days", type=int, default=60)
    ap.add_argument("--betas", type=float, nargs="+", default=[0.5, 0.6, 0.7, 0.8, 0.85, 0.9, 1.0, 1.2])
    args = ap.parse_args()

    truth = {1, 2, 3, 4}
    clusters = [synth_cluster(8, args.days * 96, 0.9, s, n_correlated=5) for s in range(args.seeds)]
    print(f"{'beta':>6}{'exact':>8}{'false':>8}{'missed':>8}")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateWarning)
        for beta in args.betas:
            exact, false, missed = 0, [], []
            for seed, farms in enumerate(clusters):
                _, peers = select_for_target(farms, 0, beta=beta, seed=seed)
                exact += set(peers) == truth
                false.append(len(set(peers) - truth))
                missed.append(len(truth - set(peers)))
            print(f"{beta:>6.2f}{exact:>5}/{args.seeds:<2}{np.mean(false):>8.2f}{np.mean(missed):>8.2f}")


if __name__ == "__main__":
    main()
