"""Power of the five 3x3 scenarios at SS 600 / 210 weeks (bar chart).

Usage: python scripts/scenario_power.py [--reps 1000] [--out results/scenario_power]
"""

import argparse
import sys

from cwta.cli import main

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--reps", default="1000")
    ap.add_argument("--seed", default="2")
    ap.add_argument("--workers")
    ap.add_argument("--out", default="results/scenario_power")
    a = ap.parse_args()
    argv = ["power", "--model", "3x3", "--scenarios", "i,ii,iii,iv,v", "--n", "600", "--weeks", "210",
            "--reps", a.reps, "--seed", a.seed, "--out", a.out]
    if a.workers:
        argv += ["--workers", a.workers]
    sys.exit(main(argv))
