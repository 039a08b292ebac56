"""Write a synthetic survey-shaped pooled CSV (columns D, value, w, group, x1)."""

import argparse

from ratexp.montecarlo import write_survey_like

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("path")
    ap.add_argument("--n", type=int, default=600, help="rows per arm and group")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--c0", type=float, default=1.03, help="aggregate multiplicative shock")
    args = ap.parse_args()
    write_survey_like(args.path, args.n, args.seed, c0=args.c0)
