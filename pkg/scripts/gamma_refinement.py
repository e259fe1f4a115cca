"""Refinement ladder for the discrete minimal energy.

The discrete value is an upper bound on the continuum minimum and decreases
under grid refinement; the rate is not known in closed form, so it is
tracked here for an interval and a fat Cantor truncation.

Usage: python3 scripts/gamma_refinement.py [--s 0.5]
"""
import argparse

import numpy as np

from randcover.dyadic import fat_cantor_intervals, geometric_gap_ratios, rasterize_intervals
from randcover.gamma import gamma


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--s", type=float, default=0.5)
    ap.add_argument("--levels", type=int, nargs="+", default=[6, 7, 8, 9, 10, 11, 12])
    args = ap.parse_args()
    # a fixed four-stage Cantor union, inner-rasterized, so the ladder is nested
    ivs = np.array(fat_cantor_intervals(geometric_gap_ratios(0.25, 4)))
    shapes = {
        "interval[0,1/4]": lambda lv: rasterize_intervals(np.array([0.0]), np.array([0.25]), lv),
        "cantor4(q=1/4)": lambda lv: rasterize_intervals(ivs[:, 0], ivs[:, 1], lv, "inner"),
    }
    print("set,level,cells,gamma,duality_gap,converged")
    for label, make in shapes.items():
        for lv in args.levels:
            E = make(lv)
            r = gamma(E, args.s)
            print(f"{label},{lv},{len(E)},{r.value:.8g},{r.duality_gap:.3g},{r.converged}")


if __name__ == "__main__":
    main()
