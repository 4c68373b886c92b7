"""Cohort-vs-rest analysis of the shipped synthetic dose-escalation fixture.

Usage: python scripts/cohort_analysis.py [--out results/cohort_analysis]
"""

import argparse
import sys
from importlib import resources

from cwta.cli import main

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results/cohort_analysis")
    a = ap.parse_args()
    fixture = resources.files("cwta.data").joinpath("synthetic_cohorts.csv")
    sys.exit(main(["analyze", "--input", str(fixture), "--all-cohorts", "--exact", "--out", a.out]))
