#!/usr/bin/env python3
"""Full (lambda_s, lambda_f) hyperparameter study on a synthetic biased
classification dataset; writes one CSV row per (pair, seed)."""

import argparse

from fairmp.cli import write_csv
from fairmp.datasets import load_dataset, make_biased_classification
from fairmp.sweeps import HYPER_SWEEP_COLUMNS, LAMBDA_F_GRID, LAMBDA_S_GRID, run_hyper_grid


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="hyper_study.csv")
    ap.add_argument("--data", default=None, help="dataset dir (default: synthetic)")
    ap.add_argument("--n", type=int, default=800)
    ap.add_argument("--seeds", type=int, default=3)
    ap.add_argument("--epochs", type=int, default=300)
    args = ap.parse_args()

    if args.data:
        ds = load_dataset(args.data)
    else:
        ds = make_biased_classification(n=args.n, seed=0)
    rows = run_hyper_grid(ds, LAMBDA_S_GRID, LAMBDA_F_GRID,
                          seeds=args.seeds, epochs=args.epochs)
    write_csv(args.out, HYPER_SWEEP_COLUMNS, rows)
    print(f"wrote {args.out} ({len(rows)} rows)")


if __name__ == "__main__":
    main()
