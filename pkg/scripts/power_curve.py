"""Rejection frequency of the RE test as a function of rho.

    python scripts/power_curve.py --n 800 --reps 200 --boot 200 --out power_n800.csv
"""

import argparse
import time

from ratexp.engine import TestConfig
from ratexp.montecarlo import DECIDERS, KINDS, DgpSpec, power_curve


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--kind", choices=KINDS, default="no_covariates")
    ap.add_argument("--test", choices=sorted(DECIDERS), default="full")
    ap.add_argument("--rho", default="0.3,0.45,0.55,0.616,0.7,0.85,1.0")
    ap.add_argument("--n", type=int, default=800)
    ap.add_argument("--reps", type=int, default=200)
    ap.add_argument("--boot", type=int, default=200)
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--workers", type=int, default=None)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()

    grid = [float(v) for v in args.rho.split(",")]
    t0 = time.time()
    curve = power_curve(DgpSpec(args.kind, 1.0, args.n, args.seed), grid, args.reps,
                        TestConfig(n_boot=args.boot), args.test, args.workers)
    for rho, r, se in zip(curve.rho_grid, curve.rejection_rate, curve.se):
        print(f"rho={rho:.3f}  reject={r:.3f}  (se {se:.3f})")
    print(f"elapsed {time.time() - t0:.1f}s")
    if args.out:
        curve.to_csv(args.out)


if __name__ == "__main__":
    main()
