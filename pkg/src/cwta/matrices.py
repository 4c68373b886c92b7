"""Ordinal efficacy/toxicity tiers and the combined health-score matrices.

A matrix maps a (toxicity row, efficacy column) cell to an integer health
score where 0 is the best attainable state. Transition weights elsewhere in
the package are score differences divided by ``max_score``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

from .errors import ConfigError, ScoreOutOfRange


class EfficacyTier3(IntEnum):
    HEALTHY = 0
    SICK = 1
    DEAD_FROM_DISEASE = 2


class ToxicityTier3(IntEnum):
    NONTOXIC = 0
    TOXIC = 1
    POISONED = 2  # labelled "Fatal Toxicity" in the combined 3x3 grid


class EfficacyTier5(IntEnum):
    CR = 0
    PR = 1
    SD = 2
    PD = 3
    DEATH = 4

    @property
    def ordinal_score(self) -> int:
        return EFFICACY_ONLY_SCORES[self]


EFFICACY_ONLY_SCORES = (0, 2, 4, 6, 11)
_EFFICACY_OFFSET = (0, 2, 4, 6)
MAX_GRADE = 5


@dataclass(frozen=True)
class RbaMatrix:
    """Immutable scoring grid.

    ``nonreversible_cols`` lists efficacy columns that, once entered, can only
    be followed by the same or a worse column (PD in the cancer grid).
    ``efficacy_only`` optionally gives the per-column score used when
    toxicity is ignored.
    """

    name: str
    rows: tuple[str, ...]
    cols: tuple[str, ...]
    scores: tuple[tuple[int, ...], ...]
    absorptive_scores: frozenset[int]
    max_score: int
    nonreversible_cols: frozenset[int] = frozenset()
    efficacy_only: tuple[int, ...] | None = None
    efficacy_only_max: int | None = None
    _valid: frozenset[int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.scores) != len(self.rows):
            raise ConfigError(f"{self.name}: {len(self.scores)} score rows for {len(self.rows)} labels")
        for r in self.scores:
            if len(r) != len(self.cols):
                raise ConfigError(f"{self.name}: ragged score grid")
            for s in r:
                if not 0 <= s <= self.max_score:
                    raise ScoreOutOfRange(f"{self.name}: score {s} outside [0, {self.max_score}]")
        if self.max_score <= 0:
            raise ConfigError("max_score must be positive")
        object.__setattr__(self, "_valid", frozenset(s for r in self.scores for s in r))

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.rows), len(self.cols)

    def score(self, row: int, col: int) -> int:
        if not (0 <= row < len(self.rows) and 0 <= col < len(self.cols)):
            raise ScoreOutOfRange(f"cell ({row}, {col}) outside {self.name} grid {self.shape}")
        return self.scores[row][col]

    def is_valid_score(self, score: float) -> bool:
        return score in self._valid

    def is_absorptive(self, score: float) -> bool:
        return score in self.absorptive_scores

    def scaled(self, c: float) -> "RbaMatrix":
        """Every score (and the maximum) multiplied by ``c``; used for invariance checks."""
        scores = tuple(tuple(s * c for s in r) for r in self.scores)
        eff = None if self.efficacy_only is None else tuple(s * c for s in self.efficacy_only)
        return RbaMatrix(
            name=f"{self.name}*{c}",
            rows=self.rows,
            cols=self.cols,
            scores=scores,
            absorptive_scores=frozenset(s * c for s in self.absorptive_scores),
            max_score=self.max_score * c,
            nonreversible_cols=self.nonreversible_cols,
            efficacy_only=eff,
            efficacy_only_max=None if self.efficacy_only_max is None else self.efficacy_only_max * c,
        )

    def efficacy_only_matrix(self) -> "RbaMatrix":
        """Single-row matrix scoring the efficacy coordinate alone."""
        if self.efficacy_only is None:
            raise ConfigError(f"{self.name} has no efficacy-only scoring")
        top = self.efficacy_only_max
        return RbaMatrix(
            name=f"{self.name}-efficacy",
            rows=("any",),
            cols=self.cols,
            scores=(tuple(self.efficacy_only),),
            absorptive_scores=frozenset({top}),
            max_score=top,
            nonreversible_cols=self.nonreversible_cols,
        )

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "rows": list(self.rows),
            "cols": list(self.cols),
            "scores": [list(r) for r in self.scores],
            "absorptive": sorted(self.absorptive_scores),
            "max_score": self.max_score,
            "nonreversible_cols": sorted(self.nonreversible_cols),
        }


M3X3 = RbaMatrix(
    name="M3x3",
    rows=("Nontoxic", "Toxic", "Fatal Toxicity"),
    cols=("Healthy", "Sick", "Fatal Disease"),
    scores=(
        (0, 1, 3),
        (1, 2, 3),
        (3, 3, 3),
    ),
    absorptive_scores=frozenset({3}),
    max_score=3,
    efficacy_only=(0, 1, 2),
    efficacy_only_max=2,
)

M6X5 = RbaMatrix(
    name="M6x5",
    rows=tuple(f"grade {g}" for g in range(MAX_GRADE + 1)),
    cols=tuple(t.name for t in EfficacyTier5),
    scores=tuple(
        tuple(11 if (g == MAX_GRADE or e == EfficacyTier5.DEATH) else g + _EFFICACY_OFFSET[e] for e in EfficacyTier5)
        for g in range(MAX_GRADE + 1)
    ),
    absorptive_scores=frozenset({11}),
    max_score=11,
    nonreversible_cols=frozenset({int(EfficacyTier5.PD)}),
    efficacy_only=EFFICACY_ONLY_SCORES,
    efficacy_only_max=11,
)

BUILTIN = {"M3x3": M3X3, "3x3": M3X3, "M6x5": M6X5, "6x5": M6X5}


def score_3x3(tox: ToxicityTier3 | int, eff: EfficacyTier3 | int) -> int:
    return M3X3.score(int(tox), int(eff))


def score_6x5(grade: int, eff: EfficacyTier5 | int) -> int:
    if not 0 <= grade <= MAX_GRADE:
        raise ScoreOutOfRange(f"CTCAE grade {grade} outside [0, {MAX_GRADE}]")
    return M6X5.score(grade, int(eff))


def efficacy_only_score(eff: EfficacyTier5 | int) -> int:
    return EFFICACY_ONLY_SCORES[int(eff)]


def is_absorptive(score: float, matrix: RbaMatrix) -> bool:
    return matrix.is_absorptive(score)


def load_matrix(spec: str | Path) -> RbaMatrix:
    """Resolve a built-in name ("6x5", "3x3") or read a custom JSON grid."""
    if str(spec) in BUILTIN:
        return BUILTIN[str(spec)]
    path = Path(spec)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read matrix {spec}: {exc}") from exc
    return matrix_from_json(doc, default_name=path.stem)


def matrix_from_json(doc: dict, default_name: str = "custom") -> RbaMatrix:
    try:
        scores = tuple(tuple(int(s) for s in row) for row in doc["scores"])
        m = RbaMatrix(
            name=doc.get("name", default_name),
            rows=tuple(doc["rows"]),
            cols=tuple(doc["cols"]),
            scores=scores,
            absorptive_scores=frozenset(int(s) for s in doc["absorptive"]),
            max_score=int(doc["max_score"]),
            nonreversible_cols=frozenset(int(c) for c in doc.get("nonreversible_cols", ())),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"malformed matrix document: {exc!r}") from exc
    if max(max(r) for r in m.scores) != m.max_score:
        raise ConfigError("max_score is not attained by any cell")
    return m
