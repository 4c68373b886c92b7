"""Generate the synthetic 29-patient dose-escalation fixture.

Seven cohorts with 3, 3, 3, 5, 3, 7, 5 patients. The 210 mg cohort is built
to do clearly better than the rest (responses, little toxicity, long
follow-up) and the 70 mg cohort clearly worse (early toxicity and
progression); the remaining cohorts are a mixture of typical courses.

Usage: python scripts/make_fixture.py [--out src/cwta/data/synthetic_cohorts.csv] [--seed 5]
"""

import argparse
from pathlib import Path

import numpy as np

from cwta.ingest import PatientDayRecord, write_patient_days
from cwta.matrices import EfficacyTier5 as R

COHORTS = [("20mg", 3), ("40mg", 3), ("70mg", 3), ("100mg", 5), ("140mg", 3), ("210mg", 7), ("280mg", 5)]
SCAN_EVERY = 56  # RECIST assessment roughly every two months

# archetype per cohort; "mixed" draws typical or good/poor at random
PLAN = {
    "20mg": ["typical", "typical", "poor"],
    "40mg": ["typical", "good", "typical"],
    "70mg": ["poor", "poor", "poor"],
    "100mg": ["typical", "typical", "good", "typical", "poor"],
    "140mg": ["typical", "typical", "typical"],
    "210mg": ["good", "good", "good", "good", "good", "typical", "good"],
    "280mg": ["typical", "good", "typical", "poor", "typical"],
}


def _course(kind: str, rng: np.random.Generator) -> tuple[dict[int, int], dict[int, R], int, bool]:
    """Return (grade changes by day, RECIST changes by day, last day, died)."""
    grades: dict[int, int] = {}
    recist: dict[int, R] = {}

    def episode(start: int, grade: int, length: int) -> None:
        grades[start] = grade
        grades[start + length] = 0

    if kind == "good":
        last = int(rng.integers(200, 260))
        episode(int(rng.integers(5, 30)), 1, int(rng.integers(3, 8)))
        recist[SCAN_EVERY] = R.PR
        if rng.random() < 0.6:
            recist[2 * SCAN_EVERY] = R.CR
        return grades, recist, last, False
    if kind == "poor":
        episode(int(rng.integers(3, 10)), 3, int(rng.integers(10, 20)))
        episode(int(rng.integers(30, 45)), 2, int(rng.integers(5, 10)))
        recist[SCAN_EVERY] = R.PD
        if rng.random() < 0.5:
            recist[SCAN_EVERY + int(rng.integers(5, 20))] = R.DEATH
            return grades, recist, max(recist), True
        return grades, recist, SCAN_EVERY + int(rng.integers(1, 7)), False
    # typical: some toxicity, stable for one or two scans, then progression
    episode(int(rng.integers(5, 40)), int(rng.integers(1, 3)), int(rng.integers(4, 12)))
    if rng.random() < 0.5:
        episode(int(rng.integers(60, 90)), int(rng.integers(1, 3)), int(rng.integers(4, 12)))
    n_stable = int(rng.integers(1, 3))
    if rng.random() < 0.3:
        recist[SCAN_EVERY] = R.PR
    pd_day = SCAN_EVERY * (n_stable + 1)
    recist[pd_day] = R.PD
    return grades, recist, pd_day + int(rng.integers(1, 7)), False


def make_records(seed: int = 5) -> list[PatientDayRecord]:
    rng = np.random.default_rng(seed)
    out = []
    k = 0
    for cohort, n in COHORTS:
        kinds = PLAN[cohort]
        assert len(kinds) == n
        for kind in kinds:
            k += 1
            pid = f"P{k:02d}"
            grades, recist, last, died = _course(kind, rng)
            days = sorted({0, last, *(d for d in grades if d < last), *(d for d in recist if d <= last)})
            g, r = 0, R.SD
            for d in days:
                g = grades.get(d, g)
                r = recist.get(d, r)
                if r == R.DEATH:
                    g = 0
                out.append(PatientDayRecord(pid, cohort, d, g, r, off_study=(d == last and not died)))
    return out


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "src/cwta/data/synthetic_cohorts.csv"))
    ap.add_argument("--seed", type=int, default=5)
    args = ap.parse_args()
    recs = make_records(args.seed)
    write_patient_days(recs, args.out)
    print(f"{len({r.patient_id for r in recs})} patients, {len(recs)} rows -> {args.out}")


if __name__ == "__main__":
    main()
