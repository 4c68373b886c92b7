import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cwta.errors import EmptyGroup, FewerThanTwoGroups
from cwta.sim import flat_endpoints, load_default, simulate_states, simulate_trial
from cwta.stats import event_table, flatten, logrank, permutation_logrank, weighted_curve, weighted_logrank

from oracles import brute_force_u, dataset, random_reversible, traj


def test_event_table_single_death():
    ds = dataset({"A": [traj("a", "A", 4, [(5, 11)], censor=10)], "B": [traj("b", "B", 4, censor=10)]})
    et = event_table(ds)
    assert list(et.times) == [5]
    assert et.at_risk[:, 0].tolist() == [1, 1]
    assert et.weighted_events[0, 0] == pytest.approx(7 / 11)
    assert et.weighted_events[1, 0] == 0


def test_curve_rises_on_improvement():
    ds = dataset({"A": [traj("a", "A", 4, [(3, 2)], censor=10)], "B": [traj("b", "B", 4, censor=10)]})
    cur = weighted_curve(ds, "A")
    assert cur.values.tolist() == pytest.approx([1.0, 13 / 11])


def test_curve_values_can_exceed_one_and_are_not_clamped():
    pats = [traj(f"a{i}", "A", 6, [(2, 0)], censor=5) for i in range(3)]
    ds = dataset({"A": pats, "B": [traj("b", "B", 4, censor=5)]})
    assert weighted_curve(ds, "A").values[-1] == pytest.approx(1 + 6 / 11)


def test_no_events():
    ds = dataset({"A": [traj("a", "A", 4)], "B": [traj("b", "B", 4)]})
    r = weighted_logrank(ds)
    assert r.no_events and r.p_two_sided == 1.0 and r.U == 0.0
    assert permutation_logrank(ds).p_two_sided == 1.0


def test_group_count_errors():
    with pytest.raises(FewerThanTwoGroups):
        flatten(dataset({"A": [traj("a", "A", 4)]}))
    with pytest.raises(FewerThanTwoGroups):
        flatten(dataset({"A": [traj("a", "A", 4)], "B": [traj("b", "B", 4)], "C": [traj("c", "C", 4)]}))
    with pytest.raises(EmptyGroup):
        flatten(dataset({"A": [traj("a", "A", 4)], "B": []}))


def test_direction():
    worse = dataset(
        {
            "A": [traj(f"a{i}", "A", 4, [(2, 11)]) for i in range(4)],
            "B": [traj(f"b{i}", "B", 4, censor=10) for i in range(4)],
        }
    )
    assert weighted_logrank(worse).direction == "worse"
    better = dataset(
        {
            "A": [traj(f"a{i}", "A", 4, [(2, 0)]) for i in range(4)],
            "B": [traj(f"b{i}", "B", 4, censor=10) for i in range(4)],
        }
    )
    assert weighted_logrank(better).direction == "better"


seeds = st.integers(0, 2**32 - 1)


@settings(max_examples=60, deadline=None)
@given(seeds, st.integers(2, 25))
def test_u_matches_definition(seed, n):
    ds = random_reversible(np.random.default_rng(seed), n)
    assert weighted_logrank(ds).U == pytest.approx(brute_force_u(ds), abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(seeds, st.integers(2, 25))
def test_swapping_groups_negates_u(seed, n):
    ds = random_reversible(np.random.default_rng(seed), n)
    a, b = ds.group_names
    swapped = dataset({b: ds.groups[b], a: ds.groups[a]})
    r1, r2 = weighted_logrank(ds), weighted_logrank(swapped)
    assert r2.U == pytest.approx(-r1.U, abs=1e-12)
    assert r2.V == pytest.approx(r1.V, rel=1e-12, abs=1e-15)
    assert r2.p_two_sided == pytest.approx(r1.p_two_sided, abs=1e-12)
    assert r1.V >= 0 and 0.0 <= r1.p_two_sided <= 1.0


@settings(max_examples=30, deadline=None)
@given(seeds, st.integers(3, 12))
def test_sampled_permutation_close_to_exact(seed, n):
    ds = random_reversible(np.random.default_rng(seed), n)
    exact = permutation_logrank(ds, exact=True).p_two_sided
    sampled = permutation_logrank(ds, n_perm=4000, seed=seed, exact=False).p_two_sided
    assert abs(exact - sampled) < 0.05
    assert 0.0 < sampled <= 1.0


def test_permutation_is_deterministic_and_seeded():
    ds = random_reversible(np.random.default_rng(11), 40)
    a = permutation_logrank(ds, n_perm=3000, seed=5)
    b = permutation_logrank(ds, n_perm=3000, seed=5)
    assert a == b and not a.exact and a.n_permutations == 3000


def test_exact_mode_selection():
    small = random_reversible(np.random.default_rng(1), 10)
    assert permutation_logrank(small).exact
    big = random_reversible(np.random.default_rng(1), 40)
    assert not permutation_logrank(big, n_perm=100).exact


def test_logrank_dispatch():
    ds = random_reversible(np.random.default_rng(2), 12)
    assert logrank(ds, "normal") == weighted_logrank(ds)
    assert logrank(ds, "permutation", n_perm=50).method == "permutation"
    with pytest.raises(ValueError):
        logrank(ds, "bayes")


def test_flat_path_matches_dataset_path():
    cfg = replace(load_default("6x5"), sample_size=40, hr_efficacy=0.7, hr_toxicity=0.7, seed=3)
    flat = flat_endpoints(simulate_states(cfg), ("rba", "efficacy_only"))
    a, b = weighted_logrank(flat["rba"]), weighted_logrank(simulate_trial(cfg))
    assert (a.U, a.V, a.Z) == pytest.approx((b.U, b.V, b.Z), abs=1e-12)
    r_eff = weighted_logrank(simulate_trial(cfg, endpoint="efficacy_only"))
    assert weighted_logrank(flat["efficacy_only"]).Z == pytest.approx(r_eff.Z, abs=1e-12)


@pytest.mark.slow
def test_null_z_is_standard_normal_on_reversible_data():
    # multi-change trajectories: the variance must keep Z ~ N(0, 1) under H0
    base = replace(load_default("6x5"), sample_size=120)
    z = np.array([weighted_logrank(flat_endpoints(simulate_states(replace(base, seed=s)))["rba"]).Z for s in range(300)])
    assert abs(z.mean()) < 0.2
    assert 0.85 < z.std() < 1.15


def test_normal_p_value():
    ds = random_reversible(np.random.default_rng(4), 30)
    r = weighted_logrank(ds)
    assert r.Z == pytest.approx(r.U / math.sqrt(r.V))
    assert r.p_two_sided == pytest.approx(math.erfc(abs(r.Z) / math.sqrt(2)))
