"""Acceptance criteria 1-10.

Each test prints (and adds to the terminal summary) exactly one line:
``[PASS|FAIL] criterion N: <detail>``. Criteria 4-6 and 10 run the full
Monte Carlo sizes and take several minutes on a single core.
"""

from __future__ import annotations

import csv
import io
import math
from importlib import resources
from pathlib import Path

import numpy as np
import pytest

from cwta.cli import main
from cwta.matrices import M3X3, M6X5, EfficacyTier5, efficacy_only_score, score_3x3, score_6x5
from cwta.power import PowerGrid, parse_range, power_grid
from cwta.sim import load_default, scenario_3x3
from cwta.stats import permutation_logrank, weighted_curve, weighted_logrank

from oracles import (
    binary_dataset,
    brute_force_permutation_p,
    dataset,
    kaplan_meier,
    random_reversible,
    textbook_logrank,
    traj,
)

SCENARIOS = ("i", "ii", "iii", "iv", "v")
SCEN_REPS = 1000  # criterion 4 needs 1000 at scenario v; criterion 5 needs 500+
ENDP_REPS = 500
SCEN_SEED, ENDP_SEED = 2026, 1
FIXTURE = resources.files("cwta.data").joinpath("synthetic_cohorts.csv")


def report(log, n: int, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {detail}"
    print(line)
    log.append(line)
    assert ok, line


# --- shared heavy computations -----------------------------------------------


def _scenario_grid(workers: int) -> PowerGrid:
    return power_grid(
        load_default("3x3"), [600], [scenario_3x3(c) for c in SCENARIOS], "rba", SCEN_REPS, SCEN_SEED, workers=workers
    )


def _endpoint_grid(workers: int) -> PowerGrid:
    return power_grid(load_default("6x5"), parse_range("20:320:30"), [0.6, 0.7, 0.8], "both", ENDP_REPS, ENDP_SEED, workers=workers)


@pytest.fixture(scope="module")
def scenario_grid():
    return _scenario_grid(1)


@pytest.fixture(scope="module")
def endpoint_grid():
    return _endpoint_grid(1)


def _scenario_power(grid: PowerGrid) -> dict[str, float]:
    by_hr = {(p.hr_efficacy, p.hr_toxicity): p.power for p in grid.points}
    return {c: by_hr[scenario_3x3(c)] for c in SCENARIOS}


def _analyze(out: Path) -> int:
    return main(["analyze", "--input", str(FIXTURE), "--all-cohorts", "--exact", "--out", str(out)])


# --- criteria ----------------------------------------------------------------

TABLE2 = {(0, 0): 0, (0, 1): 1, (0, 2): 3, (1, 0): 1, (1, 1): 2, (1, 2): 3, (2, 0): 3, (2, 1): 3, (2, 2): 3}
TABLE4 = [
    [0, 2, 4, 6, 11],
    [1, 3, 5, 7, 11],
    [2, 4, 6, 8, 11],
    [3, 5, 7, 9, 11],
    [4, 6, 8, 10, 11],
    [11, 11, 11, 11, 11],
]
TABLE3 = {EfficacyTier5.CR: 0, EfficacyTier5.PR: 2, EfficacyTier5.SD: 4, EfficacyTier5.PD: 6, EfficacyTier5.DEATH: 11}


def test_criterion_1_matrix_fidelity(acceptance_log):
    bad = [(k, v) for k, v in TABLE2.items() if score_3x3(*k) != v]
    bad += [((g, e), TABLE4[g][e]) for g in range(6) for e in range(5) if score_6x5(g, e) != TABLE4[g][e]]
    bad += [(e, v) for e, v in TABLE3.items() if efficacy_only_score(e) != v]
    cells = len(TABLE2) + 30 + len(TABLE3)
    report(acceptance_log, 1, not bad, f"{cells - len(bad)}/{cells} cells match (3x3: 9, 6x5: 30, efficacy-only: 5)")


def test_criterion_2_classic_logrank_oracle(acceptance_log):
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(50):
        ds, rows = binary_dataset(rng, int(rng.integers(4, 21)))
        U, V, p = textbook_logrank(rows)
        r = weighted_logrank(ds)
        worst = max(worst, abs(r.U - U), abs(r.V - V), abs(r.p_two_sided - p))
    report(acceptance_log, 2, worst <= 1e-12, f"50 binary datasets, max |diff| in (U, V, p) = {worst:.2e} (tol 1e-12)")


def _small_fixtures() -> list:
    rng = np.random.default_rng(3)
    out = [random_reversible(rng, int(rng.integers(3, 11))) for _ in range(25)]
    out += [binary_dataset(rng, int(rng.integers(3, 11)))[0] for _ in range(10)]
    out.append(
        dataset(
            {
                "A": [traj("a1", "A", 4, [(2, 2), (5, 0)]), traj("a2", "A", 4, [(3, 11)]), traj("a3", "A", 4, [(6, 6)])],
                "B": [traj("b1", "B", 4, [(2, 7), (4, 11)]), traj("b2", "B", 4, [(1, 6), (3, 8)]), traj("b3", "B", 4)],
            }
        )
    )
    return out


def test_criterion_3_exact_permutation_oracle(acceptance_log):
    mismatches = 0
    fixtures = _small_fixtures()
    for ds in fixtures:
        assert len(ds) <= 10
        got = permutation_logrank(ds, n_perm=10, seed=0, exact=True)
        mismatches += got.p_two_sided != brute_force_permutation_p(ds)
    report(acceptance_log, 3, mismatches == 0, f"{len(fixtures) - mismatches}/{len(fixtures)} datasets (N<=10) match brute-force enumeration exactly")


def test_criterion_4_null_calibration(acceptance_log, scenario_grid):
    p = _scenario_power(scenario_grid)["v"]
    ok = 0.032 <= p <= 0.070
    report(acceptance_log, 4, ok, f"scenario v rejection rate {p:.3f} over {SCEN_REPS} trials (band [0.032, 0.070])")


def test_criterion_5_scenario_grid_orderings(acceptance_log, scenario_grid):
    pw = _scenario_power(scenario_grid)
    checks = {
        "iii>0.8": pw["iii"] > 0.8,
        "iii>i": pw["iii"] > pw["i"],
        "iii>ii": pw["iii"] > pw["ii"],
        "iv<i": pw["iv"] < pw["i"],
        "v<0.1": pw["v"] < 0.1,
    }
    failed = [k for k, v in checks.items() if not v]
    detail = ", ".join(f"{c}={pw[c]:.3f}" for c in SCENARIOS) + (f"; failed {failed}" if failed else "; all orderings hold")
    report(acceptance_log, 5, not failed, f"power at SS 600/210 wk, {SCEN_REPS} reps: {detail}")


def test_criterion_6_endpoint_grid_reductions(acceptance_log, endpoint_grid):
    ss = endpoint_grid.ss_at_target(0.8)
    parts, ok = [], True
    for hr in (0.6, 0.7, 0.8):
        rba, eff = ss[(hr, hr, "rba")], ss[(hr, hr, "efficacy_only")]
        if rba is None or eff is None:
            ok = False
            parts.append(f"HR {hr}: not bracketed (rba={rba}, eff={eff})")
            continue
        red = 1 - rba / eff
        ok &= rba < eff and 0.08 <= red <= 0.40
        parts.append(f"HR {hr}: {rba:.0f} vs {eff:.0f} ({red:.0%})")
    report(acceptance_log, 6, ok, f"SS at 0.8 power rba vs efficacy-only, {ENDP_REPS} reps: " + "; ".join(parts))


def test_criterion_7_scale_invariance(acceptance_log):
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(10):
        ds = random_reversible(rng, int(rng.integers(6, 30)))
        base_n = weighted_logrank(ds)
        base_p = permutation_logrank(ds, n_perm=2000, seed=1)
        for c in (2, 5, 10):
            scaled = ds.rescored(M6X5.scaled(c), {s: s * c for r in M6X5.scores for s in r})
            n = weighted_logrank(scaled)
            p = permutation_logrank(scaled, n_perm=2000, seed=1)
            worst = max(worst, abs(n.Z - base_n.Z), abs(n.p_two_sided - base_n.p_two_sided), abs(p.p_two_sided - base_p.p_two_sided))
    report(acceptance_log, 7, worst <= 1e-12, f"c in {{2,5,10}} on 10 datasets: max |diff| in (Z, p, perm p) = {worst:.2e}")


def test_criterion_8_curve_properties(acceptance_log):
    # hand example: events at 2, 4, 4, 6; censored at 3 and 5
    times, events = [2, 3, 4, 4, 5, 6], [1, 0, 1, 1, 0, 1]
    pats = [
        traj(f"p{i}", "A", 0, [(t, 3)] if e else [], censor=t, absorbed=bool(e), matrix=M3X3)
        for i, (t, e) in enumerate(zip(times, events))
    ]
    ds = dataset({"A": pats, "B": [traj("q", "B", 0, [(1, 1)], censor=9, matrix=M3X3)]}, M3X3)
    cur = weighted_curve(ds, "A")
    hand = [(0, 1.0), (2, 5 / 6), (4, 5 / 12), (6, 0.0)]
    km = kaplan_meier(times, events)
    km_err = max(abs(v - kv) for v, (_, kv) in zip(cur.values, km))
    hand_err = max(abs(v - hv) for v, (_, hv) in zip(cur.values, hand)) if len(cur.values) == len(hand) else math.inf
    # non-increasing when nobody improves
    rng = np.random.default_rng(8)
    monotone = True
    starts = cur.values[0] == 1.0
    for _ in range(20):
        d = random_reversible(rng, 12)
        worse_only = {
            g: [traj(p.id, g, p.initial_score, [(c.time, max(c.score, p.initial_score)) for c in p.changes[:1]], p.censor_time) for p in ps]
            for g, ps in d.groups.items()
        }
        for g in worse_only:
            c = weighted_curve(dataset(worse_only), g)
            starts &= c.values[0] == 1.0
            monotone &= bool(np.all(np.diff(c.values) <= 1e-15))
    ok = km_err <= 1e-12 and hand_err <= 1e-12 and monotone and starts
    report(acceptance_log, 8, ok, f"starts at 1: {starts}; non-increasing without improvements: {monotone}; KM diff {km_err:.1e}, hand diff {hand_err:.1e}")


def test_criterion_9_cohort_workflow(acceptance_log, tmp_path):
    code = _analyze(tmp_path)
    rows = list(csv.DictReader(open(tmp_path / "comparisons.csv")))
    svgs = sorted(tmp_path.glob("*_vs_others.svg"))
    by = {r["cohort"]: r for r in rows}
    best, worst = by.get("210mg"), by.get("70mg")
    others_ns = all(r["direction"] == "equivalent" for c, r in by.items() if c not in ("210mg", "70mg"))
    ok = (
        code == 0
        and len(rows) == 7
        and len(svgs) == 7
        and best["direction"] == "better" and float(best["p_value"]) < 0.05
        and worst["direction"] == "worse" and float(worst["p_value"]) < 0.05
        and others_ns
        and all(r["method"] == "permutation-exact" for r in rows)
    )
    detail = f"{len(rows)} comparisons, {len(svgs)} SVGs; 210mg {best['direction']} p={best['p_value']}; 70mg {worst['direction']} p={worst['p_value']}; others NS: {others_ns}"
    report(acceptance_log, 9, ok, detail)


def test_criterion_10_worker_determinism(acceptance_log, scenario_grid, endpoint_grid, tmp_path):
    ref2, ref4 = scenario_grid.to_csv(), endpoint_grid.to_csv()
    same = {}
    for w in (4, 8):
        same[f"scenarios/w{w}"] = _scenario_grid(w).to_csv() == ref2
        same[f"endpoints/w{w}"] = _endpoint_grid(w).to_csv() == ref4
    outs = []
    for w in (1, 4, 8):
        d = tmp_path / f"w{w}"
        _analyze(d)
        outs.append(((d / "comparisons.csv").read_bytes(), (d / "comparisons.json").read_bytes()))
    same["cohorts"] = outs[0] == outs[1] == outs[2]
    bad = [k for k, v in same.items() if not v]
    report(acceptance_log, 10, not bad, f"criteria 4-6 grids and 9 outputs byte-identical for workers 1/4/8: {'yes' if not bad else 'differs in ' + str(bad)}")
