"""Paired RBA vs efficacy-only power curves for the calibrated 6x5 model.

Writes the grid, the interpolated sample size at 0.8 power per HR and
endpoint, and one power-vs-SS plot per HR; prints the relative reduction.

Usage: python scripts/rba_vs_efficacy.py [--reps 1000] [--workers 8] [--out results/rba_vs_efficacy]
"""

import argparse
import csv
import sys
from pathlib import Path

from cwta.cli import main

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--reps", default="1000")
    ap.add_argument("--seed", default="1")
    ap.add_argument("--workers")
    ap.add_argument("--out", default="results/rba_vs_efficacy")
    a = ap.parse_args()
    argv = ["power", "--model", "6x5", "--ss", "20:320:30", "--hr-eff-list", "0.6,0.7,0.8", "--endpoint", "both",
            "--reps", a.reps, "--seed", a.seed, "--out", a.out]
    if a.workers:
        argv += ["--workers", a.workers]
    code = main(argv)
    if code:
        sys.exit(code)
    rows = list(csv.DictReader(open(Path(a.out) / "ss_at_target.csv")))
    ss = {(r["hr_eff"], r["endpoint"]): r["ss"] for r in rows}
    for hr in sorted({r["hr_eff"] for r in rows}):
        rba, eff = ss[(hr, "rba")], ss[(hr, "efficacy_only")]
        if rba and eff:
            print(f"HR {hr}: RBA {float(rba):.0f} vs efficacy-only {float(eff):.0f} -> reduction {1 - float(rba) / float(eff):.1%}")
