"""Secure training against the centralized learner on random datasets.

Reports split-tuple agreement with the quantized-gradient oracle and with
the plain float oracle, and the largest prediction difference.

    python3 scripts/losslessness_sweep.py --runs 50
"""

import argparse

import numpy as np

from pwxgb.boost import BoostParams, oracle_predict, oracle_train
from pwxgb.federated import local_parties, predict, train
from pwxgb.net import PartyTopology, connect
from pwxgb.ring import DEFAULT_CODEC

TOPO = PartyTopology(0, (1, 2), (100, 101, 102))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--runs", type=int, default=50)
    ap.add_argument("--max-samples", type=int, default=500)
    ap.add_argument("--aggregation", choices=["onehot", "eq_const"], default="onehot")
    args = ap.parse_args()

    same_q = same_f = 0
    worst = 0.0
    for seed in range(args.runs):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(30, args.max_samples + 1))
        parts = [rng.normal(size=(n, int(rng.integers(1, 9)))) for _ in range(3)]
        y = sum(np.sin(p[:, 0]) * rng.normal() for p in parts) + 0.1 * rng.normal(size=n)
        params = BoostParams(n_trees=int(rng.integers(1, 11)), max_depth=int(rng.integers(1, 4)), n_bins=16)
        with connect(TOPO) as mesh:
            fm = train(mesh, local_parties(parts, TOPO), y, params, seed=seed, aggregation=args.aggregation)
            pred = predict(mesh, fm, local_parties(parts, TOPO))
        q, qs = oracle_train(parts, y, params, party_ids=TOPO.providers, grad_codec=DEFAULT_CODEC)
        f, _ = oracle_train(parts, y, params, party_ids=TOPO.providers)
        ok_q = fm.model.split_tuples() == q.split_tuples()
        ok_f = fm.model.split_tuples() == f.split_tuples()
        diff = float(np.max(np.abs(pred - oracle_predict(q, qs, parts))))
        same_q += ok_q
        same_f += ok_f
        worst = max(worst, diff)
        print(f"run {seed:>3}  n={n:<4} T={params.n_trees:<2} D={params.max_depth}  "
              f"quantized={ok_q}  float={ok_f}  max|diff|={diff:.1e}", flush=True)
    print(f"\nquantized oracle {same_q}/{args.runs}, float oracle {same_f}/{args.runs}, max |pred diff| {worst:.1e}")


if __name__ == "__main__":
    main()
