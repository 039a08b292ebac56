"""Population thresholds of the simulation designs.

Prints the largest rho at which the full test can reject, the variance-test
threshold and the two-point deviation example, optionally with the trapezoid
cross-check.
"""

import argparse
import time

from ratexp.oracle import (ZETA_SD, population_threshold_covariate_design,
                           population_threshold_no_covariates, population_threshold_two_point_bias)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--zeta-sd", type=float, default=ZETA_SD)
    ap.add_argument("--cross-check", action="store_true", help="repeat with trapezoid integration (slow)")
    ap.add_argument("--covariates", action="store_true", help="also run the Beta-covariate design")
    args = ap.parse_args()

    methods = ["exact"] + (["trapezoid"] if args.cross_check else [])
    for m in methods:
        t0 = time.time()
        r = population_threshold_no_covariates(args.zeta_sd, method=m, mesh=2001 if m == "exact" else 601)
        print(f"[{m}] rho*={r.rho_star:.5f} rho_var={r.rho_var:.5f} tail_rho={r.tail_rho:.5f} "
              f"binding y={r.binding_y:.3f} ({time.time() - t0:.1f}s)")
    two = population_threshold_two_point_bias()
    print(f"a*={two.a_star:.5f} V(eta)={two.var_eta:.5f}")
    if args.covariates:
        cov = population_threshold_covariate_design(zeta_sd=args.zeta_sd)
        print(f"covariate design: without x {cov['without_x']:.5f}, with x {cov['with_x']:.5f}")
        for x, rho in cov["per_x"].items():
            print(f"  x={x:.3g}: {rho:.5f}")


if __name__ == "__main__":
    main()
