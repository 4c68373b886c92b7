"""Stochastic two-arm trial simulator for the 3x3 and 6x5 health-score models.

Time advances in weeks. Every week the toxicity coordinate may jump to any
non-fatal tier (nearer tiers are likelier) or to fatal toxicity; every fourth
week the efficacy coordinate may move one tier. In the experimental arm a
hazard ratio ``hr`` is applied to every adverse move (toxicity escalation,
fatal toxicity, disease worsening, death from disease) and ``1 / hr`` to every
recovery move, so ``hr < 1`` favours the experimental arm in both directions.

Reproducibility: patient ``i`` of a trial with seed ``s`` draws from its own
Philox stream keyed by ``(s, i)``, so a patient's course does not depend on
the trial size, the order of generation, or the number of workers.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from importlib import resources

import numpy as np

from .errors import CalibrationFailed, InvalidConfig, UnknownCase
from .matrices import M3X3, M6X5, RbaMatrix
from .stats import FlatData, flat_from_scores
from .trajectory import PatientTrajectory, TrialDataset, build_trajectory

WEEKS_PER_MONTH = 4
DRAWS_PER_WEEK = 2  # toxicity, efficacy
_MASK64 = (1 << 64) - 1

CONTROL, EXPERIMENTAL = "control", "experimental"


@dataclass(frozen=True)
class _Model:
    matrix: RbaMatrix
    n_tox: int  # non-fatal toxicity tiers 0 .. n_tox - 1
    fatal_row: int
    start_eff: int
    death_col: int
    locked_cols: frozenset[int]  # no improvement out of these columns


MODELS = {
    "M3x3": _Model(M3X3, n_tox=2, fatal_row=2, start_eff=0, death_col=2, locked_cols=frozenset()),
    "M6x5": _Model(M6X5, n_tox=5, fatal_row=5, start_eff=2, death_col=4, locked_cols=frozenset({3})),
}
_ALIASES = {"3x3": "M3x3", "6x5": "M6x5", "M3x3": "M3x3", "M6x5": "M6x5"}


@dataclass(frozen=True)
class BaselineRates:
    p_tox_event: float = 0.0
    proximity_decay: float = 0.5
    p_tox_fatal: float = 0.0
    p_respond: float = 0.0
    p_worsen: float = 0.0
    p_death_disease: float = 0.0
    p_deepen: float | None = None  # PR -> CR; None means p_respond

    @property
    def deepen(self) -> float:
        return self.p_respond if self.p_deepen is None else self.p_deepen

    def __post_init__(self):
        for k, v in asdict(self).items():
            if v is None:
                continue
            if k == "proximity_decay":
                if not 0.0 < v < 1.0:
                    raise InvalidConfig(f"proximity_decay must be in (0, 1), got {v}")
            elif not 0.0 <= v <= 1.0:
                raise InvalidConfig(f"{k} must be a probability, got {v}")


@dataclass(frozen=True)
class SimConfig:
    model: str = "M6x5"
    sample_size: int = 200
    duration_weeks: int = 104
    hr_efficacy: float = 1.0
    hr_toxicity: float = 1.0
    baseline: BaselineRates = field(default_factory=BaselineRates)
    seed: int = 0

    def __post_init__(self):
        if self.model not in _ALIASES:
            raise InvalidConfig(f"unknown model {self.model!r}")
        object.__setattr__(self, "model", _ALIASES[self.model])
        if isinstance(self.baseline, dict):
            object.__setattr__(self, "baseline", BaselineRates(**self.baseline))
        if int(self.sample_size) != self.sample_size or self.sample_size < 2:
            raise InvalidConfig(f"sample_size must be an integer >= 2, got {self.sample_size}")
        if int(self.duration_weeks) != self.duration_weeks or self.duration_weeks < 1:
            raise InvalidConfig(f"duration_weeks must be a positive integer, got {self.duration_weeks}")
        if not (self.hr_efficacy > 0 and self.hr_toxicity > 0):
            raise InvalidConfig("hazard ratios must be positive")
        if self.seed < 0:
            raise InvalidConfig("seed must be non-negative")
        _transition_tables(self)  # validates probability sums

    @property
    def arm_sizes(self) -> tuple[int, int]:
        """(control, experimental); odd totals give the extra patient to the experimental arm."""
        return self.sample_size // 2, self.sample_size - self.sample_size // 2

    def to_json(self) -> dict:
        d = asdict(self)
        d["baseline"] = asdict(self.baseline)
        return d

    @classmethod
    def from_json(cls, doc: dict) -> "SimConfig":
        known = {k: doc[k] for k in ("model", "sample_size", "duration_weeks", "hr_efficacy", "hr_toxicity", "seed") if k in doc}
        try:
            base = BaselineRates(**doc.get("baseline", {}))
        except TypeError as exc:
            raise InvalidConfig(f"bad baseline block: {exc}") from exc
        return cls(baseline=base, **known)


def load_default(model: str) -> SimConfig:
    """Shipped baseline configuration for a model."""
    name = {"M3x3": "m3x3_default.json", "M6x5": "m6x5_calibrated.json"}[_ALIASES[model]]
    doc = json.loads(resources.files("cwta.data").joinpath(name).read_text())
    return SimConfig.from_json(doc)


def apply_hr(p: float, hr: float) -> float:
    """Per-step probability under a proportional hazard: ``1 - (1 - p) ** hr``."""
    if not 0.0 <= p <= 1.0:
        raise InvalidConfig(f"probability {p} outside [0, 1]")
    if hr <= 0:
        raise InvalidConfig(f"hazard ratio must be positive, got {hr}")
    if hr == 1.0:
        return p  # exact identity; the closed form loses the last bit
    return 1.0 - (1.0 - p) ** hr


_SCENARIOS = {
    "i": (0.5, 1.0),
    "ii": (1.0, 0.5),
    "iii": (0.5, 0.5),
    "iv": (0.5, 2.0),
    "v": (1.0, 1.0),
}


def scenario_3x3(case: str) -> tuple[float, float]:
    """(hr_efficacy, hr_toxicity) for the five efficacy/toxicity scenarios."""
    try:
        return _SCENARIOS[str(case).strip().lower()]
    except KeyError:
        raise UnknownCase(f"unknown scenario {case!r}; expected one of {', '.join(_SCENARIOS)}") from None


# --- transition tables -------------------------------------------------------


def _tox_probs(model: _Model, b: BaselineRates, hr: float) -> np.ndarray:
    """Rows: current non-fatal tier. Columns: [fatal, tier 0, ..., tier K-1]."""
    K = model.n_tox
    out = np.zeros((K, K + 1))
    for a in range(K):
        w = np.array([b.proximity_decay ** abs(t - a) if t != a else 0.0 for t in range(K)])
        total = w.sum()
        up = w * (np.arange(K) > a)
        down = w * (np.arange(K) < a)
        p_up = b.p_tox_event * up.sum() / total if total else 0.0
        p_down = b.p_tox_event * down.sum() / total if total else 0.0
        p_up, p_down = apply_hr(p_up, hr), apply_hr(p_down, 1.0 / hr)
        fatal = apply_hr(b.p_tox_fatal, hr)
        row = np.zeros(K + 1)
        row[0] = fatal
        if up.sum():
            row[1:] += p_up * up / up.sum()
        if down.sum():
            row[1:] += p_down * down / down.sum()
        row[1 + a] = 1.0 - row.sum()
        out[a] = row
    return out


def _eff_probs(model: _Model, b: BaselineRates, hr: float) -> np.ndarray:
    """Rows: current efficacy column. Columns: next column (at most one step)."""
    E = model.death_col + 1
    out = np.zeros((E, E))
    worsen = apply_hr(b.p_worsen, hr)
    death = apply_hr(b.p_death_disease, hr)
    for e in range(E):
        if e == model.death_col:
            out[e, e] = 1.0
            continue
        if e == model.death_col - 1:
            out[e, e + 1] = death
        else:
            out[e, e + 1] = worsen
        if e > 0 and e not in model.locked_cols:
            # the step into the best column (PR -> CR) has its own rate in the 6x5 model
            out[e, e - 1] = apply_hr(b.deepen if (e == 1 and E == 5) else b.p_respond, 1.0 / hr)
        out[e, e] = 1.0 - out[e].sum()
    return out


def _transition_tables(config: SimConfig) -> tuple[np.ndarray, np.ndarray]:
    """Cumulative tables indexed [arm, state, outcome]; arm 0 control, 1 experimental."""
    model = MODELS[config.model]
    tox = np.stack([_tox_probs(model, config.baseline, 1.0), _tox_probs(model, config.baseline, config.hr_toxicity)])
    eff = np.stack([_eff_probs(model, config.baseline, 1.0), _eff_probs(model, config.baseline, config.hr_efficacy)])
    for name, t in (("toxicity", tox), ("efficacy", eff)):
        if (t < -1e-12).any():
            raise InvalidConfig(f"{name} transition probabilities exceed 1 for some state")
    tox_c, eff_c = np.cumsum(tox, axis=2), np.cumsum(eff, axis=2)
    # guard the last bucket against rounding so every uniform lands somewhere
    tox_c[..., -1] = np.inf
    eff_c[..., -1] = np.inf
    return tox_c, eff_c


# --- random streams ----------------------------------------------------------


def patient_stream(seed: int, index: int) -> np.random.Generator:
    """Generator for patient ``index`` of the trial seeded with ``seed``."""
    key = np.array([int(seed) & _MASK64, int(index) & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _patient_uniforms(seed: int, n: int, weeks: int, start: int = 0) -> np.ndarray:
    # equivalent to drawing from patient_stream(seed, i) for each i, without
    # rebuilding a Generator per patient
    out = np.empty((n, weeks, DRAWS_PER_WEEK))
    bg = np.random.Philox(key=np.zeros(2, dtype=np.uint64))
    gen = np.random.Generator(bg)
    state = bg.state
    zero4 = np.zeros(4, dtype=np.uint64)
    k0 = np.uint64(int(seed) & _MASK64)
    for j in range(n):
        state["state"] = {"counter": zero4.copy(), "key": np.array([k0, start + j], dtype=np.uint64)}
        state["buffer"] = zero4.copy()
        state["buffer_pos"] = 4
        state["has_uint32"] = 0
        state["uinteger"] = 0
        bg.state = state
        out[j] = gen.random((weeks, DRAWS_PER_WEEK))
    return out


# --- core dynamics -----------------------------------------------------------


@dataclass(frozen=True)
class SimStates:
    """Dense weekly state grids, shape ``(n_patients, weeks + 1)``."""

    model: str
    tox: np.ndarray
    eff: np.ndarray
    arm: np.ndarray  # 0 control, 1 experimental

    def rba_scores(self) -> np.ndarray:
        return _score_table(MODELS[self.model].matrix)[self.tox, self.eff]

    def efficacy_scores(self) -> np.ndarray:
        """Efficacy coordinate alone, scored through the efficacy-only column values."""
        return np.asarray(MODELS[self.model].matrix.efficacy_only)[self.eff]

    def toxic_death_time(self) -> np.ndarray:
        """Week of fatal toxicity, or the final week for patients without one.

        Ignoring toxicity, a toxic death is not a disease event, so the
        efficacy-only analysis censors the patient there.
        """
        fatal = self.tox == MODELS[self.model].fatal_row
        T = self.tox.shape[1] - 1
        return np.where(fatal.any(axis=1), fatal.argmax(axis=1), T)

    def best_response(self) -> np.ndarray:
        return self.eff.min(axis=1)


def _score_table(m: RbaMatrix) -> np.ndarray:
    return np.asarray(m.scores)


def _run(config: SimConfig, uniforms: np.ndarray, arm: np.ndarray) -> SimStates:
    model = MODELS[config.model]
    tox_c, eff_c = _transition_tables(config)
    n, T = uniforms.shape[0], config.duration_weeks
    tox = np.zeros((n, T + 1), dtype=np.int8)
    eff = np.full((n, T + 1), model.start_eff, dtype=np.int8)
    cur_t = np.zeros(n, dtype=np.intp)
    cur_e = np.full(n, model.start_eff, dtype=np.intp)
    alive = np.ones(n, dtype=bool)
    for w in range(1, T + 1):
        live = np.flatnonzero(alive)
        if live.size:
            u = uniforms[live, w - 1, 0]
            out = (tox_c[arm[live], cur_t[live]] <= u[:, None]).sum(axis=1)
            fatal = out == 0
            cur_t[live] = np.where(fatal, model.fatal_row, out - 1)
            alive[live[fatal]] = False
            if w % WEEKS_PER_MONTH == 0:
                live = np.flatnonzero(alive)
                u = uniforms[live, w - 1, 1]
                cur_e[live] = (eff_c[arm[live], cur_e[live]] <= u[:, None]).sum(axis=1)
                alive[live[cur_e[live] == model.death_col]] = False
        tox[:, w] = cur_t
        eff[:, w] = cur_e
    return SimStates(config.model, tox, eff, arm)


def _arm_vector(config: SimConfig) -> np.ndarray:
    n_c, n_e = config.arm_sizes
    return np.concatenate([np.zeros(n_c, dtype=np.intp), np.ones(n_e, dtype=np.intp)])


def simulate_states(config: SimConfig) -> SimStates:
    arm = _arm_vector(config)
    u = _patient_uniforms(config.seed, len(arm), config.duration_weeks)
    return _run(config, u, arm)


def simulate_patient(config: SimConfig, arm: str, rng_stream: np.random.Generator, id: str = "p0") -> PatientTrajectory:
    if arm not in (CONTROL, EXPERIMENTAL):
        raise InvalidConfig(f"arm must be {CONTROL!r} or {EXPERIMENTAL!r}")
    u = rng_stream.random((config.duration_weeks, DRAWS_PER_WEEK))[None]
    states = _run(config, u, np.array([int(arm == EXPERIMENTAL)]))
    return _trajectories(states, MODELS[config.model].matrix, "rba", ids=[id], groups=[arm])[0]


def _trajectories(states: SimStates, matrix: RbaMatrix, endpoint: str, ids, groups) -> list[PatientTrajectory]:
    T = states.tox.shape[1] - 1
    if endpoint == "rba":
        scores, censor = states.rba_scores(), np.full(len(ids), T)
    else:
        scores, censor = states.efficacy_scores(), states.toxic_death_time()
        matrix = matrix.efficacy_only_matrix()
    out = []
    for i in range(scores.shape[0]):
        row = scores[i]
        t = np.flatnonzero(np.diff(row)) + 1
        recs = [(0, int(row[0]))] + [(int(k), int(row[k])) for k in t]
        out.append(build_trajectory(ids[i], groups[i], recs, int(censor[i]), matrix))
    return out


def simulate_trial(config: SimConfig, endpoint: str = "rba") -> TrialDataset:
    """Dataset with groups ``experimental`` (tested first) and ``control``."""
    states = simulate_states(config)
    matrix = MODELS[config.model].matrix
    names = [EXPERIMENTAL if a else CONTROL for a in states.arm]
    ids = [f"p{i:04d}" for i in range(len(names))]
    trajs = _trajectories(states, matrix, endpoint, ids, names)
    m = matrix if endpoint == "rba" else matrix.efficacy_only_matrix()
    return TrialDataset(
        m,
        "week",
        {
            EXPERIMENTAL: tuple(p for p in trajs if p.group == EXPERIMENTAL),
            CONTROL: tuple(p for p in trajs if p.group == CONTROL),
        },
    )


def flat_endpoints(states: SimStates, endpoints=("rba",)) -> dict[str, FlatData]:
    """Fast path used by the power harness: arrays straight from state grids."""
    matrix = MODELS[states.model].matrix
    group = 1 - states.arm  # experimental is group 0
    labels = (EXPERIMENTAL, CONTROL)
    out = {}
    for ep in endpoints:
        if ep == "rba":
            out[ep] = flat_from_scores(
                states.rba_scores(), group, matrix.max_score, np.array(sorted(matrix.absorptive_scores)), labels
            )
        elif ep == "efficacy_only":
            top = matrix.efficacy_only_max
            out[ep] = flat_from_scores(
                states.efficacy_scores(), group, top, np.array([top]), labels, censor_time=states.toxic_death_time()
            )
        else:
            raise InvalidConfig(f"unknown endpoint {ep!r}")
    return out


# --- calibration -------------------------------------------------------------


@dataclass(frozen=True)
class CalibrationResult:
    baseline: BaselineRates
    cr_rate: float
    pr_rate: float
    n_patients: int


def best_response_rates(states: SimStates, arm: int | None = 0) -> tuple[float, float]:
    """Mutually exclusive best-response fractions (CR, PR) for the 6x5 model."""
    best = states.best_response()
    if arm is not None:
        best = best[states.arm == arm]
    return float(np.mean(best == 0)), float(np.mean(best == 1))


def _control_best(config: SimConfig, fatal_week: np.ndarray, u_eff: np.ndarray) -> np.ndarray:
    # efficacy chain only; fatal toxicity does not depend on the toxicity tier
    model = MODELS[config.model]
    eff_c = _transition_tables(config)[1][0]
    n = u_eff.shape[0]
    cur = np.full(n, model.start_eff, dtype=np.intp)
    best = cur.copy()
    for m, w in enumerate(range(WEEKS_PER_MONTH, config.duration_weeks + 1, WEEKS_PER_MONTH)):
        live = (fatal_week > w) & (cur != model.death_col)
        cur[live] = (eff_c[cur[live]] <= u_eff[live, m][:, None]).sum(axis=1)
        np.minimum(best, cur, out=best)
    return best


def calibrate_control(
    base: SimConfig,
    cr_rate: float = 0.10,
    pr_rate: float = 0.50,
    tolerance: float = 0.02,
    n_patients: int = 20_000,
    seed: int = 20240725,
    iterations: int = 40,
) -> CalibrationResult:
    """Fit control-arm response rates to mutually exclusive best-response targets.

    ``p_worsen``, ``p_death_disease`` and the toxicity parameters are taken
    from ``base``. With those fixed, the chance of ever reaching PR or better
    depends only on ``p_respond`` (SD -> PR), and the chance of reaching CR is
    then increasing in ``p_deepen`` (PR -> CR); each is found by bisection on
    one shared set of uniforms.
    """
    if MODELS[base.model].death_col != 4:
        raise InvalidConfig("calibration targets are defined for the 6x5 model")
    if not (0.0 <= cr_rate <= 1.0 and 0.0 <= pr_rate <= 1.0 and cr_rate + pr_rate <= 1.0):
        raise InvalidConfig("targets must be rates in [0, 1] summing to at most 1")
    cfg = replace(base, sample_size=max(2, n_patients), hr_efficacy=1.0, hr_toxicity=1.0, seed=seed)
    u = _patient_uniforms(seed, n_patients, cfg.duration_weeks)
    weeks = np.arange(1, cfg.duration_weeks + 1)
    fatal = u[:, :, 0] < cfg.baseline.p_tox_fatal
    fatal_week = np.where(fatal.any(axis=1), weeks[fatal.argmax(axis=1)], cfg.duration_weeks + 1)
    u_eff = u[:, WEEKS_PER_MONTH - 1 :: WEEKS_PER_MONTH, 1]
    top = 1.0 - cfg.baseline.p_worsen

    def rates(r: float, d: float) -> tuple[float, float]:
        c = replace(cfg, baseline=replace(cfg.baseline, p_respond=r, p_deepen=d))
        best = _control_best(c, fatal_week, u_eff)
        return float(np.mean(best == 0)), float(np.mean(best == 1))

    def bisect(f, target: float, what: str) -> float:
        if target == 0.0:
            return 0.0
        if f(top) < target:
            raise CalibrationFailed(f"{what} cannot reach {target:.3f} (at most {f(top):.3f} with p_worsen={cfg.baseline.p_worsen})")
        lo, hi = 0.0, top
        for _ in range(iterations):
            mid = 0.5 * (lo + hi)
            if f(mid) < target:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    r = bisect(lambda x: sum(rates(x, 0.0)), cr_rate + pr_rate, "CR+PR rate")
    d = bisect(lambda x: rates(r, x)[0], cr_rate, "CR rate") if r > 0 else 0.0
    cr, pr = rates(r, d)
    if abs(cr - cr_rate) > tolerance or abs(pr - pr_rate) > tolerance:
        raise CalibrationFailed(f"best fit CR {cr:.3f} / PR {pr:.3f} misses targets by more than {tolerance}")
    fitted = replace(cfg.baseline, p_respond=float(r), p_deepen=float(d))
    return CalibrationResult(fitted, cr, pr, n_patients)
