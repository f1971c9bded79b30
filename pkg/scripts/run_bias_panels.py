#!/usr/bin/env python3
"""Bias-amplification trend panels.

Sweeps one aggregation step over synthetic two-block graphs and writes one
CSV per panel (homophily, density, node count, group balance), ready for
external plotting. Each panel varies one parameter and holds the others at
the reference setting n=1e4, rho_d=1e-3, eps_sens=0.95, c=0.5.
"""

import argparse
import os

from fairmp.cli import write_csv
from fairmp.sweeps import BIAS_SWEEP_COLUMNS, SweepSpec, run_bias_sweep

PANELS = {
    "eps_sens": (0.80, 0.85, 0.90, 0.95, 1.0),
    "rho_d": (5e-4, 1e-3, 2e-3),
    "n": (1000, 3000, 10_000, 30_000),
    "c": (0.1, 0.2, 0.3, 0.4, 0.5),
}
REFERENCE = dict(n=10_000, rho_d=1e-3, eps_sens=0.95, c=0.5)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="bias_panels")
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--sigma", default="", help="e.g. '1,0;0,2' for the anisotropic variant")
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)

    fixed_extra = {}
    if args.sigma:
        import numpy as np

        fixed_extra["sigma"] = np.array(
            [[float(v) for v in row.split(",")] for row in args.sigma.split(";")]
        )
    for param, grid in PANELS.items():
        fixed = {k: v for k, v in REFERENCE.items() if k != param}
        fixed.update(fixed_extra)
        spec = SweepSpec(param=param, grid=grid, fixed=fixed,
                         seeds=args.seeds, base_seed=args.seed)
        rows = run_bias_sweep(spec)
        path = os.path.join(args.out, f"panel_{param}.csv")
        write_csv(path, BIAS_SWEEP_COLUMNS, rows)
        print(f"wrote {path} ({len(rows)} rows)")


if __name__ == "__main__":
    main()
