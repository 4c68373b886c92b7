"""Weighted product-limit curves and the weighted logrank test.

Every state change of a patient carries a weight ``(s_new - s_old) / max_score``
in [-1, 1]; positive weights are deteriorations. At each distinct change time
the pooled weights are compared against the share expected from the at-risk
counts, exactly as the classic logrank compares deaths; with unit weights all
quantities reduce to the textbook tied-data logrank.

Internally datasets are flattened to numpy arrays (:class:`FlatData`) so the
simulation harness can feed score matrices directly without building
trajectory objects.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyGroup, FewerThanTwoGroups
from .trajectory import TrialDataset

# patients with at most this many in total are always enumerated exactly
EXACT_MAX_PATIENTS = 12
PERM_CHUNK = 1024


@dataclass(frozen=True)
class FlatData:
    """Two-group dataset as arrays. Group index 0 is the tested group."""

    labels: tuple[str, str]
    group: np.ndarray  # (n_patients,) int, 0 or 1
    exit_time: np.ndarray  # (n_patients,) last time each patient is at risk
    ch_patient: np.ndarray  # (n_changes,) patient index
    ch_time: np.ndarray
    ch_weight: np.ndarray

    @property
    def n_patients(self) -> int:
        return len(self.group)


@dataclass(frozen=True)
class EventTable:
    labels: tuple[str, str]
    times: np.ndarray  # (J,)
    at_risk: np.ndarray  # (2, J)
    weighted_events: np.ndarray  # (2, J) signed sums D_gj
    abs_weighted_events: np.ndarray  # (2, J)
    n_changes: np.ndarray  # (2, J) raw change counts
    sum_w: np.ndarray  # (J,) pooled
    sum_w2: np.ndarray  # (J,) pooled

    def __len__(self) -> int:
        return len(self.times)

    @property
    def total_at_risk(self) -> np.ndarray:
        return self.at_risk.sum(axis=0)


@dataclass(frozen=True)
class WeightedCurve:
    group: str
    times: np.ndarray  # starts with 0
    values: np.ndarray  # starts with 1.0


@dataclass(frozen=True)
class LogrankResult:
    U: float
    V: float
    Z: float
    p_two_sided: float
    method: str = "normal"
    n_permutations: int = 0
    exact: bool = False
    no_events: bool = False
    V_event: float = 0.0  # classic per-time variance, for reference

    @property
    def direction(self) -> str:
        """Direction for the first group: deteriorating more than expected is worse."""
        if self.U > 0:
            return "worse"
        if self.U < 0:
            return "better"
        return "equivalent"


def flatten(dataset: TrialDataset) -> FlatData:
    names = dataset.group_names
    if len(names) < 2:
        raise FewerThanTwoGroups(f"need two groups, got {list(names)}")
    if len(names) > 2:
        raise FewerThanTwoGroups(f"expected exactly two groups, got {len(names)}; pool with cohort_vs_rest first")
    for g in names:
        if not dataset.groups[g]:
            raise EmptyGroup(f"group {g!r} has no patients")
    top = float(dataset.matrix.max_score)
    group, exit_time, ch_p, ch_t, ch_w = [], [], [], [], []
    for gi, g in enumerate(names):
        for p in dataset.groups[g]:
            i = len(group)
            group.append(gi)
            exit_time.append(p.exit_time)
            prev = p.initial_score
            for c in p.changes:
                ch_p.append(i)
                ch_t.append(c.time)
                ch_w.append((c.score - prev) / top)
                prev = c.score
    return FlatData(
        labels=(names[0], names[1]),
        group=np.asarray(group, dtype=np.int64),
        exit_time=np.asarray(exit_time, dtype=float),
        ch_patient=np.asarray(ch_p, dtype=np.int64),
        ch_time=np.asarray(ch_t, dtype=float),
        ch_weight=np.asarray(ch_w, dtype=float),
    )


def flat_from_scores(
    scores: np.ndarray,
    group: np.ndarray,
    max_score: float,
    absorptive: np.ndarray | None = None,
    labels: tuple[str, str] = ("experimental", "control"),
    censor_time: np.ndarray | None = None,
) -> FlatData:
    """Flatten a dense ``(n_patients, T + 1)`` integer-time score grid.

    Column ``t`` holds the score at time ``t``. Patients are censored at ``T``
    (or at ``censor_time`` when given) unless they reach an absorptive score
    earlier; rows must be constant after either.
    """
    scores = np.asarray(scores)
    n, width = scores.shape
    diff = np.diff(scores, axis=1)
    pi, tj = np.nonzero(diff)
    exit_time = np.full(n, float(width - 1)) if censor_time is None else np.asarray(censor_time, dtype=float).copy()
    if absorptive is not None and len(absorptive):
        hit = np.isin(scores, absorptive)
        absorbed = hit.any(axis=1)
        exit_time[absorbed] = np.minimum(exit_time[absorbed], hit[absorbed].argmax(axis=1))
    return FlatData(
        labels=labels,
        group=np.asarray(group, dtype=np.int64),
        exit_time=exit_time,
        ch_patient=pi.astype(np.int64),
        ch_time=(tj + 1).astype(float),
        ch_weight=diff[pi, tj] / float(max_score),
    )


def _as_flat(data) -> FlatData:
    return data if isinstance(data, FlatData) else flatten(data)


def event_table(data: TrialDataset | FlatData) -> EventTable:
    f = _as_flat(data)
    times, idx = np.unique(f.ch_time, return_inverse=True)
    J = len(times)
    w = f.ch_weight
    g_of_change = f.group[f.ch_patient]
    at_risk = np.empty((2, J), dtype=np.int64)
    D = np.empty((2, J))
    A = np.empty((2, J))
    C = np.empty((2, J), dtype=np.int64)
    for g in (0, 1):
        ex = np.sort(f.exit_time[f.group == g])
        at_risk[g] = len(ex) - np.searchsorted(ex, times, side="left")
        m = g_of_change == g
        D[g] = np.bincount(idx[m], weights=w[m], minlength=J)
        A[g] = np.bincount(idx[m], weights=np.abs(w[m]), minlength=J)
        C[g] = np.bincount(idx[m], minlength=J)
    return EventTable(
        labels=f.labels,
        times=times,
        at_risk=at_risk,
        weighted_events=D,
        abs_weighted_events=A,
        n_changes=C,
        sum_w=np.bincount(idx, weights=w, minlength=J),
        sum_w2=np.bincount(idx, weights=w * w, minlength=J),
    )


def weighted_curve(data: TrialDataset | FlatData, group: str | int = 0) -> WeightedCurve:
    """Product-limit curve: each event time multiplies by ``1 - D_gj / n_gj``.

    Improvements (negative weights) push the curve above its previous value,
    and above 1 if they outweigh earlier deterioration.
    """
    et = event_table(data)
    if isinstance(group, str) and group not in et.labels:
        raise KeyError(group)
    g = et.labels.index(group) if isinstance(group, str) else int(group)
    own = et.n_changes[g] > 0
    factors = 1.0 - et.weighted_events[g, own] / et.at_risk[g, own]
    return WeightedCurve(
        group=et.labels[g],
        times=np.concatenate([[0.0], et.times[own]]),
        values=np.concatenate([[1.0], np.cumprod(factors)]),
    )


@dataclass(frozen=True)
class _Moments:
    c: np.ndarray  # per-patient contribution; U = c[group == 0].sum()
    V: float
    V_event: float  # sum of per-event-time hypergeometric terms


def _moments(f: FlatData) -> _Moments:
    """Observed-minus-expected contributions and the null variance of ``U``.

    Write ``r_ij = x_ij - xbar_j`` for patient ``i`` at risk at event time
    ``j`` (``x_ij`` its change weight, ``xbar_j`` the risk-set mean) and
    ``a_j = n1 n2 / (n (n - 1))``. A patient with at most one change
    contributes ``sum_j a_j r_ij^2``; summed over such patients this is the
    classic per-time hypergeometric variance. A patient with several changes
    contributes ``(sum_j sqrt(a_j) r_ij)^2`` instead: its increments are
    dependent (a toxicity flare and its resolution largely cancel), and
    treating them as independent overstates the variance several-fold.
    """
    et = event_table(f)
    N = f.n_patients
    n = et.total_at_risk.astype(float)
    c = np.bincount(f.ch_patient, weights=f.ch_weight, minlength=N)
    if not len(et):
        return _Moments(c, 0.0, 0.0)
    n1, n2 = et.at_risk[0].astype(float), et.at_risk[1].astype(float)
    a = np.zeros_like(n)
    ok = n > 1
    a[ok] = n1[ok] * n2[ok] / (n[ok] * (n[ok] - 1))
    xbar = et.sum_w / n

    # prefix sums over event times; patient i is at risk at times[: last_i + 1]
    last = np.searchsorted(et.times, f.exit_time, side="right") - 1
    pre = lambda v: np.concatenate([[0.0], np.cumsum(v)])  # noqa: E731
    c -= pre(xbar)[last + 1]

    j = np.searchsorted(et.times, f.ch_time)
    w = f.ch_weight
    diag = pre(a * xbar**2)[last + 1] + np.bincount(f.ch_patient, weights=a[j] * (w * w - 2.0 * w * xbar[j]), minlength=N)
    root = np.sqrt(a)
    summed = np.bincount(f.ch_patient, weights=root[j] * w, minlength=N) - pre(root * xbar)[last + 1]
    multi = np.bincount(f.ch_patient, minlength=N) > 1
    V = float(np.where(multi, summed**2, diag).sum())
    V_event = float(np.sum(a * (n * et.sum_w2 - et.sum_w**2) / np.where(ok, n, 1.0)))
    return _Moments(c, max(V, 0.0), max(V_event, 0.0))


def _normal_p(z: float) -> float:
    return min(1.0, math.erfc(abs(z) / math.sqrt(2.0)))


def weighted_logrank(data: TrialDataset | FlatData) -> LogrankResult:
    f = _as_flat(data)
    if len(f.ch_time) == 0:
        return LogrankResult(0.0, 0.0, 0.0, 1.0, no_events=True)
    m = _moments(f)
    U = float(m.c[f.group == 0].sum())
    # a variance at rounding level (relative to the squared weight scale) is zero
    if m.V <= 1e-24 * float(np.abs(f.ch_weight).sum()) ** 2:
        return LogrankResult(U, 0.0, 0.0, 1.0, V_event=m.V_event)
    Z = U / math.sqrt(m.V)
    return LogrankResult(U, m.V, Z, _normal_p(Z), V_event=m.V_event)


def _subset_seed(seed: int, chunk: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), chunk]))


def _exact_sums(c: np.ndarray, k: int) -> np.ndarray:
    n = len(c)
    total = math.comb(n, k)
    out = np.empty(total)
    combos = itertools.combinations(range(n), k)
    step = 1 << 16
    pos = 0
    while pos < total:
        block = list(itertools.islice(combos, step))
        idx = np.array(block, dtype=np.intp).reshape(len(block), k)
        out[pos : pos + len(block)] = c[idx].sum(axis=1)
        pos += len(block)
    return out


def permutation_logrank(
    data: TrialDataset | FlatData,
    n_perm: int = 10_000,
    seed: int = 0,
    exact: bool | None = None,
) -> LogrankResult:
    """Permutation p-value for the weighted logrank ``U``.

    Group labels are permuted with trajectories held fixed. ``exact=None``
    enumerates every assignment when there are at most 12 patients or when
    the number of assignments does not exceed ``n_perm``; otherwise
    ``n_perm`` random assignments are drawn in fixed-size chunks with
    per-chunk seeds, so the result does not depend on how chunks are scheduled.
    """
    f = _as_flat(data)
    base = weighted_logrank(f)
    if base.no_events:
        return LogrankResult(0.0, 0.0, 0.0, 1.0, method="permutation", no_events=True)
    c = _moments(f).c
    N = f.n_patients
    k = int((f.group == 0).sum())
    u_obs = abs(float(c[f.group == 0].sum()))
    # ties within rounding noise count as hits; the weights set the scale so
    # that data with all-zero contributions are treated as all ties
    tol = 1e-9 * (float(np.abs(c).sum()) + float(np.abs(f.ch_weight).sum()))
    n_assign = math.comb(N, k)
    if exact is None:
        exact = N <= EXACT_MAX_PATIENTS or n_assign <= n_perm
    if exact:
        sums = _exact_sums(c, k)
        hits = int(np.count_nonzero(np.abs(sums) >= u_obs - tol))
        p = hits / n_assign
        n_used = n_assign
    else:
        if n_perm < 1:
            raise ValueError("n_perm must be >= 1")
        hits = 0
        for chunk, start in enumerate(range(0, n_perm, PERM_CHUNK)):
            m = min(PERM_CHUNK, n_perm - start)
            keys = _subset_seed(seed, chunk).random((m, N))
            chosen = np.argpartition(keys, k - 1, axis=1)[:, :k] if k < N else np.tile(np.arange(N), (m, 1))
            sums = c[chosen].sum(axis=1)
            hits += int(np.count_nonzero(np.abs(sums) >= u_obs - tol))
        p = (1 + hits) / (1 + n_perm)
        n_used = n_perm
    return LogrankResult(
        base.U, base.V, base.Z, min(p, 1.0), method="permutation", n_permutations=n_used, exact=exact, V_event=base.V_event
    )


def logrank(data, method: str = "normal", n_perm: int = 10_000, seed: int = 0, exact: bool | None = None) -> LogrankResult:
    if method == "normal":
        return weighted_logrank(data)
    if method == "permutation":
        return permutation_logrank(data, n_perm=n_perm, seed=seed, exact=exact)
    raise ValueError(f"unknown method {method!r}")
