"""Real-world patient-day records: parsing, daily scoring, cohort-vs-rest tests.

Input is one row per patient per observed study day with the day's worst
symptomatic CTCAE grade and the current RECIST status. Days between rows
carry the last observed state forward (scans happen every couple of months
while toxicity is recorded daily).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence, TextIO

from .errors import (
    ConfigError,
    DataQualityError,
    DuplicatePatientDay,
    GapFound,
    GradeOutOfRange,
    MalformedRow,
    MissingBaseline,
    RecistRegressionAfterPD,
    UnknownCohort,
    UnknownRecistCode,
)
from .matrices import M6X5, MAX_GRADE, EfficacyTier5, RbaMatrix
from .report import significance_label
from .stats import LogrankResult, logrank
from .trajectory import PatientTrajectory, TrialDataset, build_trajectory

HEADER = ("patient_id", "cohort", "day", "ctcae_grade", "recist", "off_study")
GAP_POLICIES = ("carry_forward", "strict")
EXIT_POLICIES = ("censor", "carry_to_cutoff")
_TRUE = {"true", "1", "yes", "y", "t"}
_FALSE = {"false", "0", "no", "n", "f", ""}


@dataclass(frozen=True)
class PatientDayRecord:
    patient_id: str
    cohort: str
    day: int
    ctcae_grade: int
    recist: EfficacyTier5
    off_study: bool = False
    line: int = 0  # source line, 0 when not read from a file

    def cell(self) -> tuple[int, int]:
        return self.ctcae_grade, int(self.recist)


def _parse_bool(text: str, line: int) -> bool:
    t = text.strip().lower()
    if t in _TRUE:
        return True
    if t in _FALSE:
        return False
    raise MalformedRow(line, f"off_study must be true/false, got {text!r}")


def _parse_row(row: list[str], line: int) -> PatientDayRecord:
    if len(row) != len(HEADER):
        raise MalformedRow(line, f"expected {len(HEADER)} fields, got {len(row)}")
    pid, cohort, day, grade, recist, off = (f.strip() for f in row)
    if not pid:
        raise MalformedRow(line, "empty patient_id")
    if not cohort:
        raise MalformedRow(line, "empty cohort")
    try:
        day_i = int(day)
    except ValueError:
        raise MalformedRow(line, f"day must be an integer, got {day!r}") from None
    if day_i < 0:
        raise MalformedRow(line, f"negative study day {day_i}")
    try:
        grade_i = int(grade)
    except ValueError:
        raise MalformedRow(line, f"ctcae_grade must be an integer, got {grade!r}") from None
    if not 0 <= grade_i <= MAX_GRADE:
        raise GradeOutOfRange(line, f"CTCAE grade {grade_i} outside 0..{MAX_GRADE}")
    try:
        tier = EfficacyTier5[recist.upper()]
    except KeyError:
        raise UnknownRecistCode(line, f"unknown RECIST code {recist!r}") from None
    return PatientDayRecord(pid, cohort, day_i, grade_i, tier, _parse_bool(off, line), line)


def parse_patient_days(source: str | Path | TextIO) -> list[PatientDayRecord]:
    """Read and validate a patient-day CSV (path or open text stream)."""
    if isinstance(source, (str, Path)):
        with open(source, newline="", encoding="utf-8") as fh:
            return parse_patient_days(fh)
    reader = csv.reader(source)
    header = next(reader, None)
    if header is None:
        raise MalformedRow(1, "empty file (missing header)")
    if tuple(h.strip().lower() for h in header) != HEADER:
        raise MalformedRow(1, f"header must be {','.join(HEADER)}")
    out: list[PatientDayRecord] = []
    seen: dict[tuple[str, int], int] = {}
    cohort_of: dict[str, str] = {}
    for row in reader:
        line = reader.line_num
        if not row or all(not f.strip() for f in row):
            continue
        rec = _parse_row(row, line)
        key = (rec.patient_id, rec.day)
        if key in seen:
            raise DuplicatePatientDay(line, f"patient {rec.patient_id} day {rec.day} already given on line {seen[key]}")
        seen[key] = line
        prev = cohort_of.setdefault(rec.patient_id, rec.cohort)
        if prev != rec.cohort:
            raise MalformedRow(line, f"patient {rec.patient_id} listed in cohorts {prev!r} and {rec.cohort!r}")
        out.append(rec)
    return out


def write_patient_days(records: Iterable[PatientDayRecord], dest: str | Path | TextIO) -> None:
    if isinstance(dest, (str, Path)):
        with open(dest, "w", newline="", encoding="utf-8") as fh:
            write_patient_days(records, fh)
        return
    w = csv.writer(dest, lineterminator="\n")
    w.writerow(HEADER)
    for r in records:
        w.writerow([r.patient_id, r.cohort, r.day, r.ctcae_grade, r.recist.name, "true" if r.off_study else "false"])


def records_to_csv(records: Iterable[PatientDayRecord]) -> str:
    buf = io.StringIO()
    write_patient_days(records, buf)
    return buf.getvalue()


def _by_patient(records: Iterable[PatientDayRecord]) -> dict[str, list[PatientDayRecord]]:
    out: dict[str, list[PatientDayRecord]] = {}
    for r in records:
        out.setdefault(r.patient_id, []).append(r)
    for rs in out.values():
        rs.sort(key=lambda r: r.day)
    return out


def _with_baseline(pid: str, rs: list[PatientDayRecord], gap_policy: str) -> list[PatientDayRecord]:
    if rs[0].day == 0:
        return rs
    if gap_policy == "strict":
        raise MissingBaseline(f"patient {pid}: first record on day {rs[0].day}, no day-0 baseline")
    return [PatientDayRecord(pid, rs[0].cohort, 0, 0, EfficacyTier5.SD), *rs]


def expand_daily(records: Iterable[PatientDayRecord]) -> list[PatientDayRecord]:
    """Dense day-by-day records with gaps filled by carry-forward (baseline injected)."""
    out = []
    for pid, rs in _by_patient(records).items():
        rs = _with_baseline(pid, rs, "carry_forward")
        for a, b in zip(rs, rs[1:] + [None]):
            out.append(PatientDayRecord(pid, a.cohort, a.day, a.ctcae_grade, a.recist, a.off_study and b is None))
            stop = a.day if b is None else b.day
            for d in range(a.day + 1, stop):
                out.append(PatientDayRecord(pid, a.cohort, d, a.ctcae_grade, a.recist))
    return out


def _patient_trajectory(
    pid: str, rs: list[PatientDayRecord], matrix: RbaMatrix, gap_policy: str, cutoff: int | None = None
) -> PatientTrajectory:
    rs = _with_baseline(pid, rs, gap_policy)
    for a, b in zip(rs, rs[1:]):
        if gap_policy == "strict" and b.day != a.day + 1:
            raise GapFound(f"patient {pid}: no record for days {a.day + 1}..{b.day - 1}")
        if a.off_study:
            raise DataQualityError(f"patient {pid}: record on day {b.day} after off-study day {a.day}")
    seen_pd = False
    for r in rs:
        if seen_pd and r.recist < EfficacyTier5.PD:
            raise RecistRegressionAfterPD(f"patient {pid}: RECIST {r.recist.name} on day {r.day} after PD")
        seen_pd |= r.recist >= EfficacyTier5.PD
    scores = [(r.day, matrix.score(*r.cell())) for r in rs]
    end = rs[-1].day if cutoff is None else max(cutoff, rs[-1].day)
    return build_trajectory(pid, rs[0].cohort, scores, end, matrix)


def daily_trajectories(
    records: Sequence[PatientDayRecord],
    matrix: RbaMatrix = M6X5,
    gap_policy: str = "carry_forward",
    exit_policy: str = "censor",
) -> TrialDataset:
    """Score every patient day through ``matrix`` and group patients by cohort.

    Patients are censored at their last observed day unless a death or
    grade-5 record absorbs them. With ``exit_policy="carry_to_cutoff"`` the
    last state is instead held until the latest day seen in the whole file.
    Every failing patient is reported in a single error so a bad export can
    be fixed in one pass.
    """
    if gap_policy not in GAP_POLICIES:
        raise ConfigError(f"gap_policy must be one of {GAP_POLICIES}, got {gap_policy!r}")
    if exit_policy not in EXIT_POLICIES:
        raise ConfigError(f"exit_policy must be one of {EXIT_POLICIES}, got {exit_policy!r}")
    cutoff = max((r.day for r in records), default=0) if exit_policy == "carry_to_cutoff" else None
    if matrix.shape != M6X5.shape:
        raise ConfigError(f"matrix {matrix.name} must have 6 grade rows x 5 RECIST columns, has shape {matrix.shape}")
    cohorts: dict[str, list[PatientTrajectory]] = {}
    failures: list[DataQualityError] = []
    for pid, rs in _by_patient(records).items():
        try:
            traj = _patient_trajectory(pid, rs, matrix, gap_policy, cutoff)
        except DataQualityError as exc:
            failures.append(exc)
            continue
        cohorts.setdefault(traj.group, []).append(traj)
    if failures:
        kinds = {type(e) for e in failures}
        cls = kinds.pop() if len(kinds) == 1 else DataQualityError
        err = cls("; ".join(str(e) for e in failures))
        err.patients = [str(e).split(":")[0].removeprefix("patient ") for e in failures]
        raise err
    if not cohorts:
        raise ConfigError("no patient records")
    return TrialDataset(matrix, "day", cohorts)


@dataclass(frozen=True)
class CohortComparison:
    cohort: str
    n_cohort: int
    n_rest: int
    result: LogrankResult
    alpha: float = 0.05

    @property
    def p_value(self) -> float:
        return self.result.p_two_sided

    @property
    def direction(self) -> str:
        if self.result.p_two_sided >= self.alpha:
            return "equivalent"
        return self.result.direction

    @property
    def method(self) -> str:
        r = self.result
        if r.method == "permutation":
            return "permutation-exact" if r.exact else f"permutation-{r.n_permutations}"
        return r.method

    def label(self) -> str:
        """``"0.0140 (significant)"`` or ``"0.9130 (NS)"``."""
        return significance_label(self.p_value, self.alpha)


def cohort_vs_rest(
    dataset: TrialDataset,
    cohort: str,
    method: str = "permutation",
    alpha: float = 0.05,
    n_perm: int = 10_000,
    seed: int = 0,
    exact: bool | None = None,
) -> CohortComparison:
    """Test one cohort against all other patients pooled."""
    if cohort not in dataset.groups:
        raise UnknownCohort(f"unknown cohort {cohort!r}; known: {', '.join(dataset.group_names)}")
    two = dataset.cohort_vs_rest(cohort)
    n_c = len(dataset.groups[cohort])
    res = logrank(two, method=method, n_perm=n_perm, seed=seed, exact=exact)
    return CohortComparison(cohort, n_c, len(dataset) - n_c, res, alpha)


def all_cohorts(dataset: TrialDataset, **kw) -> list[CohortComparison]:
    return [cohort_vs_rest(dataset, c, **kw) for c in dataset.group_names]


def comparisons_csv(rows: Iterable[CohortComparison]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["cohort", "n", "direction", "p_value", "method"])
    for c in rows:
        w.writerow([c.cohort, c.n_cohort, c.direction, f"{c.p_value:.4f}", c.method])
    return buf.getvalue()


def comparisons_json(rows: Iterable[CohortComparison]) -> list[dict]:
    return [
        {
            "cohort": c.cohort,
            "n_cohort": c.n_cohort,
            "n_rest": c.n_rest,
            "direction": c.direction,
            "p_value": round(c.p_value, 4),
            "method": c.method,
            "U": round(c.result.U, 6),
            "Z": round(c.result.Z, 6),
            "alpha": c.alpha,
        }
        for c in rows
    ]
