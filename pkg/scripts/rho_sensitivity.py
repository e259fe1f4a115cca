"""Sensitivity of the shrinking-ball dimension estimate to the block growth factor rho.

The block construction has no prescribed growth rate, so rho = 4 is a choice.
This reports the median estimate over the scenario seeds for several rho; it
asserts nothing.

Usage: python3 scripts/rho_sensitivity.py [--rhos 2 4 8] [--seeds 20]
"""
import argparse

import numpy as np

from randcover.cli import load_builtin
from randcover.experiments import _balls_trial


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rhos", type=float, nargs="+", default=[2.0, 4.0, 8.0])
    ap.add_argument("--seeds", type=int, default=20)
    args = ap.parse_args()
    sc = load_builtin("shrinking-balls")
    print("alpha,rho,blocks,median_estimate,target,abs_error")
    for alpha in sc.params["alphas"]:
        for rho in args.rhos:
            p = dict(sc.params, rho=rho)
            try:
                res = [_balls_trial((alpha, sc.master_seed, t, p, p["displacement"]))
                       for t in range(args.seeds)]
            except ValueError as exc:   # too few blocks for a slope
                print(f"{alpha},{rho},,,{1 / alpha:.4f},  # {exc}")
                continue
            med = float(np.median([r[3].value for r in res]))
            print(f"{alpha},{rho},{len(res[0][1])},{med:.4f},{1 / alpha:.4f},{abs(med - 1 / alpha):.4f}")


if __name__ == "__main__":
    main()
