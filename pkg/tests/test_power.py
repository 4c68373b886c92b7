import json
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cwta.errors import ConfigError, TargetNotBracketed
from cwta.power import (
    PowerGrid,
    PowerPoint,
    estimate_power,
    grid_json,
    interpolate_ss,
    parse_range,
    power_grid,
    rep_seed,
    resolve_workers,
)
from cwta.sim import load_default

BASE6 = load_default("6x5")


def test_parse_range():
    assert parse_range("20:320:30") == [20, 50, 80, 110, 140, 170, 200, 230, 260, 290, 320]
    assert parse_range("10,40") == [10, 40]
    for bad in ("20:10:5", "a:b:c", "1:5:0"):
        with pytest.raises(ConfigError):
            parse_range(bad)


def test_interpolate_linear():
    assert interpolate_ss([20, 50, 80], [0.5, 0.7, 0.9]) == pytest.approx(65.0)


def test_interpolate_smooths_wiggles():
    # 0.82 at 50 then 0.70 at 80 pool to 0.76, so the crossing moves past 80
    assert interpolate_ss([20, 50, 80, 110], [0.4, 0.82, 0.70, 0.95]) == pytest.approx(80 + 30 * 0.04 / 0.19)


@pytest.mark.parametrize("power", [[0.1, 0.2, 0.3], [0.85, 0.9, 0.95]])
def test_interpolate_not_bracketed(power):
    with pytest.raises(TargetNotBracketed):
        interpolate_ss([20, 50, 80], power)


@given(st.lists(st.floats(0, 1), min_size=2, max_size=12), st.floats(0.05, 0.95))
def test_interpolated_value_lies_in_grid(power, target):
    ss = np.arange(len(power)) * 30 + 20
    try:
        v = interpolate_ss(ss, power, target)
    except TargetNotBracketed:
        return
    assert ss[0] < v <= ss[-1]


def test_rep_seed_is_a_pure_function():
    assert rep_seed(1, 50, 0.7, 0.7, 3) == rep_seed(1, 50, 0.7, 0.7, 3)
    seeds = {rep_seed(1, 50, 0.7, 0.7, r) for r in range(1000)}
    assert len(seeds) == 1000
    assert rep_seed(1, 50, 0.7, 0.7, 0) != rep_seed(1, 80, 0.7, 0.7, 0)


def test_resolve_workers(monkeypatch):
    monkeypatch.setenv("CWTA_WORKERS", "3")
    assert resolve_workers(None) == 3
    assert resolve_workers(2) == 2
    monkeypatch.delenv("CWTA_WORKERS")
    assert resolve_workers(None) >= 1


def test_argument_validation():
    with pytest.raises(ConfigError):
        power_grid(BASE6, [20], [0.7], replications=0)
    with pytest.raises(ConfigError):
        power_grid(BASE6, [], [0.7], replications=5)
    with pytest.raises(ConfigError):
        power_grid(BASE6, [20], [0.7], endpoint="os", replications=5)


def test_workers_do_not_change_results():
    args = (replace(BASE6, duration_weeks=52), [20, 40], [0.7, (0.8, 1.2)], "both", 30, 9)
    assert power_grid(*args, workers=1).to_csv() == power_grid(*args, workers=3).to_csv()


def test_estimate_power_paired_endpoints():
    cfg = replace(BASE6, sample_size=40, hr_efficacy=0.7, hr_toxicity=0.7)
    both = estimate_power(cfg, "both", replications=20, seed=4)
    assert set(both) == {"rba", "efficacy_only"}
    single = estimate_power(cfg, "rba", replications=20, seed=4)
    assert single == both["rba"]
    assert single.se == pytest.approx(np.sqrt(single.power * (1 - single.power) / 20))


def test_extreme_separation_gives_full_power():
    cfg = replace(BASE6, sample_size=80, hr_efficacy=0.2, hr_toxicity=0.2)
    assert estimate_power(cfg, replications=30, seed=1).power >= 0.95


def test_infeasible_extreme_hr_is_rejected():
    # recovery moves use 1 / HR, so a tiny HR can push a row of probabilities past 1
    with pytest.raises(ConfigError):
        replace(BASE6, hr_efficacy=0.02)


def test_null_power_is_near_alpha():
    cfg = replace(BASE6, sample_size=60)
    p = estimate_power(cfg, replications=300, seed=8).power
    assert 0.01 <= p <= 0.11


def test_serialisation():
    g = PowerGrid((PowerPoint(0.7, 0.7, 50, 100, 0.05, 0.7004, "rba"), PowerPoint(0.7, 0.7, 80, 100, 0.05, 0.9, "rba")))
    lines = g.to_csv().splitlines()
    assert lines[0] == "endpoint,hr_eff,hr_tox,ss,reps,power,se"
    assert lines[1].startswith("rba,0.7,0.7,50,100,0.700,")
    doc = json.loads(grid_json(g))
    assert doc["ss_at_target"] == [{"endpoint": "rba", "hr_eff": 0.7, "hr_tox": 0.7, "ss": 64.97, "target": 0.8}]


@pytest.mark.slow
def test_grid_properties():
    """Monotone in SS and HR, and RBA at least as powerful when both axes favour the drug."""
    g = power_grid(BASE6, [50, 110, 170], [0.6, 0.7, 0.8], "both", 300, seed=21)
    tol = 0.03
    for ep in ("rba", "efficacy_only"):
        rows = np.array([g.curve((hr, hr), ep)[1] for hr in (0.6, 0.7, 0.8)])
        assert np.all(np.diff(rows, axis=1) >= -tol)  # SS up -> power up
        assert np.all(np.diff(rows, axis=0) <= tol)  # HR up -> power down
    rba = np.array([g.curve((hr, hr), "rba")[1] for hr in (0.6, 0.7, 0.8)])
    eff = np.array([g.curve((hr, hr), "efficacy_only")[1] for hr in (0.6, 0.7, 0.8)])
    assert np.all(rba >= eff - tol)
    informative = (eff > 0.2) & (eff < 0.95)
    assert np.mean(rba[informative] > eff[informative]) >= 2 / 3
