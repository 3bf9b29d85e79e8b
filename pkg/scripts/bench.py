"""Training time against party count and inference time against model size.

    python3 scripts/bench.py --repeats 3 --tcp
"""

import argparse

from pwxgb.bench import (BenchConfig, growth_exponent, inference_table, non_decreasing, time_inference,
                         time_training, training_table)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--samples", type=int, default=400)
    ap.add_argument("--tcp", action="store_true", help="loopback sockets instead of in-process queues")
    args = ap.parse_args()
    cfg = BenchConfig(repeats=args.repeats, n_samples=args.samples, mode="tcp" if args.tcp else "inprocess")

    rows = time_training(cfg)
    print(training_table(rows))
    print(f"non-decreasing in party count: {non_decreasing(rows)}\n")
    inf = time_inference(cfg)
    print(inference_table(inf))
    print(f"growth exponent in trees x depth: {growth_exponent(inf):.2f}")


if __name__ == "__main__":
    main()
