"""Per-patient health-score step functions and trial datasets."""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .errors import (
    ChangeAfterAbsorption,
    ChangeAfterCensor,
    ConfigError,
    DataQualityError,
    IrreversibleTierViolation,
    NonMonotoneTime,
    ScoreOutOfRange,
    TimeOutOfRange,
)
from .matrices import RbaMatrix


@dataclass(frozen=True)
class StateChange:
    time: float
    score: float


@dataclass(frozen=True)
class PatientTrajectory:
    """Right-continuous step function of health scores.

    ``censor_time`` is the end of observation. When ``absorbed`` is set the
    final change is the absorbing event and the patient leaves every later
    risk set regardless of ``censor_time``.
    """

    id: str
    group: str
    initial_score: float
    changes: tuple[StateChange, ...]
    censor_time: float
    absorbed: bool = False

    @property
    def exit_time(self) -> float:
        if self.absorbed:
            return self.changes[-1].time if self.changes else 0.0
        return self.censor_time

    @property
    def final_score(self) -> float:
        return self.changes[-1].score if self.changes else self.initial_score

    def with_group(self, group: str) -> "PatientTrajectory":
        return PatientTrajectory(self.id, group, self.initial_score, self.changes, self.censor_time, self.absorbed)


def build_trajectory(
    id: str,
    group: str,
    records: Iterable[tuple[float, float]],
    censor_time: float | None,
    matrix: RbaMatrix,
) -> PatientTrajectory:
    """Validate time-sorted ``(time, score)`` records into a trajectory.

    The first record is the time-0 state. Consecutive repeats of a score are
    collapsed, so records may be a dense daily series. ``censor_time`` defaults
    to the last record time.
    """
    records = list(records)
    if not records:
        raise ConfigError(f"patient {id}: no records")
    t0, s0 = records[0]
    if t0 != 0:
        raise DataQualityError(f"patient {id}: first record at time {t0}, expected 0")
    if censor_time is None:
        censor_time = records[-1][0]
    if censor_time < 0:
        raise TimeOutOfRange(f"patient {id}: negative censor time {censor_time}")

    changes: list[StateChange] = []
    current = _check_score(id, s0, matrix)
    absorbed = matrix.is_absorptive(current)
    prev_t = t0
    for t, s in records[1:]:
        if t <= prev_t:
            raise NonMonotoneTime(f"patient {id}: time {t} does not follow {prev_t}")
        prev_t = t
        s = _check_score(id, s, matrix)
        if s == current:
            continue
        if absorbed:
            raise ChangeAfterAbsorption(f"patient {id}: score {s} at time {t} after absorption")
        if t > censor_time:
            raise ChangeAfterCensor(f"patient {id}: change at time {t} after censor time {censor_time}")
        changes.append(StateChange(t, s))
        current = s
        absorbed = matrix.is_absorptive(s)
    if absorbed and not changes:
        # absorbed from time 0: never at risk beyond the origin
        return PatientTrajectory(id, group, s0, (), censor_time, True)
    return PatientTrajectory(id, group, s0, tuple(changes), censor_time, absorbed)


def build_trajectory_from_cells(
    id: str,
    group: str,
    cells: Iterable[tuple[float, int, int]],
    censor_time: float | None,
    matrix: RbaMatrix,
) -> PatientTrajectory:
    """Like :func:`build_trajectory` but from ``(time, toxicity_row, efficacy_col)``.

    Working on cells lets the non-reversible efficacy columns be enforced,
    which the scores alone cannot express (different cells share scores).
    """
    worst_locked = None
    scored = []
    for t, row, col in cells:
        if worst_locked is not None and col < worst_locked:
            raise IrreversibleTierViolation(
                f"patient {id}: efficacy {matrix.cols[col]} at time {t} after non-reversible {matrix.cols[worst_locked]}"
            )
        if col in matrix.nonreversible_cols:
            worst_locked = col if worst_locked is None else max(worst_locked, col)
        scored.append((t, matrix.score(row, col)))
    return build_trajectory(id, group, scored, censor_time, matrix)


def _check_score(id: str, s: float, matrix: RbaMatrix) -> float:
    if not matrix.is_valid_score(s):
        raise ScoreOutOfRange(f"patient {id}: score {s} not in matrix {matrix.name}")
    return s


def score_at(traj: PatientTrajectory, t: float) -> float:
    if t < 0 or t > traj.censor_time and not (traj.absorbed and t >= traj.exit_time):
        raise TimeOutOfRange(f"patient {traj.id}: time {t} outside [0, {traj.censor_time}]")
    times = [c.time for c in traj.changes]
    k = bisect.bisect_right(times, t)
    return traj.changes[k - 1].score if k else traj.initial_score


@dataclass(frozen=True)
class TrialDataset:
    matrix: RbaMatrix
    time_unit: str
    groups: Mapping[str, tuple[PatientTrajectory, ...]]
    _order: tuple[str, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.time_unit not in ("day", "week"):
            raise ConfigError(f"unknown time unit {self.time_unit!r}")
        groups = {str(g): tuple(p) for g, p in self.groups.items()}
        object.__setattr__(self, "groups", groups)
        object.__setattr__(self, "_order", tuple(groups))
        m = self.matrix
        for g, pats in groups.items():
            for p in pats:
                for s in (p.initial_score, *(c.score for c in p.changes)):
                    if not m.is_valid_score(s):
                        raise ScoreOutOfRange(f"patient {p.id}: score {s} not in matrix {m.name}")

    @property
    def group_names(self) -> tuple[str, ...]:
        return self._order

    def patients(self) -> list[PatientTrajectory]:
        return [p for g in self._order for p in self.groups[g]]

    def __len__(self) -> int:
        return sum(len(v) for v in self.groups.values())

    def cohort_vs_rest(self, cohort: str, rest_label: str = "others") -> "TrialDataset":
        """Two-group view: ``cohort`` first, every other patient pooled second."""
        if cohort not in self.groups:
            raise KeyError(cohort)
        rest = tuple(p for g in self._order if g != cohort for p in self.groups[g])
        if rest_label == cohort:
            rest_label = f"not {cohort}"
        return TrialDataset(self.matrix, self.time_unit, {cohort: self.groups[cohort], rest_label: rest})

    def rescored(self, matrix: RbaMatrix, mapping: Mapping[float, float]) -> "TrialDataset":
        """Apply a score-to-score map (e.g. a scaled matrix) to every trajectory."""
        out = {}
        for g in self._order:
            out[g] = tuple(
                PatientTrajectory(
                    p.id,
                    p.group,
                    mapping[p.initial_score],
                    tuple(StateChange(c.time, mapping[c.score]) for c in p.changes),
                    p.censor_time,
                    p.absorbed,
                )
                for p in self.groups[g]
            )
        return TrialDataset(matrix, self.time_unit, out)

    def relabeled(self, labels: Sequence[str]) -> "TrialDataset":
        """Same trajectories (in :meth:`patients` order) under new group labels."""
        pats = self.patients()
        if len(labels) != len(pats):
            raise ConfigError("one label per patient required")
        out: dict[str, list[PatientTrajectory]] = {}
        for p, g in zip(pats, labels):
            out.setdefault(g, []).append(p.with_group(g))
        return TrialDataset(self.matrix, self.time_unit, out)
