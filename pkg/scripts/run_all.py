"""Run every built-in scenario through the CLI and print a one-line verdict for each.

Usage: python3 scripts/run_all.py [--out DIR] [--jobs N]
"""
import argparse
import subprocess
import sys
import time

from randcover.cli import builtin_names


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs")
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()
    worst = 0
    for name in builtin_names():
        t0 = time.perf_counter()
        code = subprocess.call([sys.executable, "-m", "randcover", "reproduce", name,
                                "--out", args.out, "--jobs", str(args.jobs)],
                               stdout=subprocess.DEVNULL)
        verdict = {0: "PASS", 1: "FAIL"}.get(code, f"ERROR({code})")
        print(f"{name:<20} {verdict:<10} {time.perf_counter() - t0:7.1f} s")
        worst = max(worst, code)
    return worst


if __name__ == "__main__":
    sys.exit(main())
