import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from conftest import random_digraph
from saomtrade.netpanel import CompositionEvent, build_panel
from saomtrade.nonparam import (CATEGORIES, NonparamError, classify_dyads, common_influences,
                                influence_table, ks_two_sample)


def _panel(mats, labels=None, events=()):
    labels = labels or [1990 + 5 * k for k in range(len(mats))]
    return build_panel(list(zip(labels, [np.asarray(m) for m in mats])), list(events))


def planted_panel(groups=3, group_size=8, hubs_per_group=2, planted="upper"):
    """Hubs send to their own target group; new ties appear only inside a group.

    Every ordered within-group dyad has exactly ``hubs_per_group`` common
    senders, every other dyad none.
    """
    n_hubs = groups * hubs_per_group
    n = n_hubs + groups * group_size
    x0 = np.zeros((n, n), dtype=np.int8)
    members = []
    for g in range(groups):
        tg = list(range(n_hubs + g * group_size, n_hubs + (g + 1) * group_size))
        members.append(tg)
        for h in range(g * hubs_per_group, (g + 1) * hubs_per_group):
            x0[h, tg] = 1
    x1 = x0.copy()
    for tg in members:
        for a in tg:
            for b in tg:
                if a != b and (planted == "all" or a < b):
                    x1[a, b] = 1
    return _panel([x0, x1])


def test_truth_table():
    x0 = np.array([[0, 1, 1], [0, 0, 0], [1, 0, 0]])
    x1 = np.array([[0, 1, 0], [1, 0, 0], [1, 0, 0]])
    got = {c.dyad: c.category for c in classify_dyads(_panel([x0, x1]), 1)}
    assert got[(0, 1)] == "maintained" and got[(0, 2)] == "lost"
    assert got[(1, 0)] == "new" and got[(1, 2)] == "none"
    assert len(got) == 6


def test_structural_zero_dyads_are_excluded():
    x = np.zeros((3, 3), dtype=int)
    # a dyad absent at either end of the transition is out
    p = _panel([x, x, x, x], events=[CompositionEvent("2", "birth", 2)])
    for t in (1, 2):
        assert {c.dyad for c in classify_dyads(p, t)} == {(0, 1), (1, 0)}
    assert len(classify_dyads(p, 3)) == 6


def test_wave_zero_has_no_history():
    p = _panel([np.zeros((3, 3))] * 2)
    with pytest.raises(NonparamError, match="no observed history"):
        classify_dyads(p, 0)
    with pytest.raises(NonparamError):
        common_influences(p, 0, 1, 0)


def _four_node(waves_with_sender):
    mats = [np.zeros((4, 4), dtype=int) for _ in range(3)]
    for h, tp in waves_with_sender:
        mats[tp][h, 1] = mats[tp][h, 2] = 1
    return _panel(mats, [0, 5, 10])


def test_common_influence_examples():
    s = common_influences(_four_node([]), 1, 2, 2)
    assert (s.total_years, s.durations, s.count) == (0, (), 0)
    s = common_influences(_four_node([(0, 0), (0, 1)]), 1, 2, 2)
    assert (s.total_years, s.durations, s.count) == (10, (10,), 1)
    s = common_influences(_four_node([(0, 0), (3, 1)]), 1, 2, 2)
    assert (s.total_years, sorted(s.durations), s.count) == (10, [5, 5], 2)
    # the wave being explained is not part of its own history
    s = common_influences(_four_node([(0, 2)]), 1, 2, 2)
    assert s.count == 0


def test_common_influence_uses_uneven_gaps():
    mats = [np.zeros((3, 3), dtype=int) for _ in range(3)]
    mats[0][0, 1] = mats[0][0, 2] = mats[1][0, 1] = mats[1][0, 2] = 1
    p = _panel(mats, [1981, 1984, 1991])
    assert common_influences(p, 1, 2, 2).total_years == 3 + 7


@given(st.integers(0, 100_000), st.integers(3, 7), st.integers(2, 4))
def test_common_influences_match_oracle_and_are_symmetric(seed, n, waves):
    rng = np.random.default_rng(seed)
    mats = [random_digraph(rng, n, 0.4) for _ in range(waves)]
    labels = sorted(rng.choice(np.arange(1960, 2010), waves, replace=False).tolist())
    p = _panel(mats, labels)
    t = int(rng.integers(1, waves))
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            s = common_influences(p, i, j, t)
            ref = oracles.common_senders(mats, labels, i, j, t)
            assert s.total_years == sum(ref.values()) and s.count == len(ref)
            assert sorted(s.durations) == sorted(ref.values())
            assert s == common_influences(p, j, i, t)


def test_ks_examples():
    assert ks_two_sample([1, 2, 2, 3], [2, 3, 3, 4])[0] == 0.5
    d, p = ks_two_sample([0, 0, 0], [7, 7, 7], resamples=2000)
    assert d == 1.0
    # only the two assignments that keep the pools apart reach D = 1
    assert p == pytest.approx(1 / 10, abs=0.02)
    assert ks_two_sample([1, 2, 3], [1, 2, 3]) == (0.0, 1.0)
    assert ks_two_sample([1, 2, 3], [1, 2, 3], "asymptotic") == (0.0, 1.0)


def test_ks_rejects_bad_input():
    with pytest.raises(NonparamError):
        ks_two_sample([], [1.0])
    with pytest.raises(NonparamError):
        ks_two_sample([1.0], [1.0], p_method="exact")


@given(st.lists(st.integers(0, 6), min_size=1, max_size=30), st.lists(st.integers(0, 6), min_size=1, max_size=30))
def test_ks_statistic_matches_exact_enumeration(a, b):
    d, _ = ks_two_sample(a, b, resamples=1)
    assert d == float(oracles.ecdf_gap(a, b))


@given(st.lists(st.integers(-20, 20), min_size=1, max_size=25), st.lists(st.integers(-20, 20), min_size=1, max_size=25))
def test_ks_statistic_invariant_under_monotone_maps(a, b):
    d = ks_two_sample(a, b, resamples=1)[0]
    for f in (lambda v: 3 * v ** 3 + 1, math.exp, lambda v: -1 / (30 + v)):
        assert ks_two_sample([f(v) for v in a], [f(v) for v in b], resamples=1)[0] == d


def test_ks_permutation_is_seeded():
    a, b = [0, 1, 1, 2, 5], [1, 2, 2, 3, 3, 4]
    assert ks_two_sample(a, b, seed=3) == ks_two_sample(a, b, seed=3)
    assert ks_two_sample(a, b, resamples=500, seed=3)[1] != ks_two_sample(a, b, resamples=500, seed=4)[1]


def test_ks_asymptotic_matches_scipy():
    from scipy import stats
    rng = np.random.default_rng(1)
    a, b = rng.normal(size=200), rng.normal(0.2, size=150)
    d, p = ks_two_sample(a, b, "asymptotic")
    ref = stats.ks_2samp(a, b, method="asymp")
    assert d == pytest.approx(ref.statistic, rel=1e-12)
    assert p == pytest.approx(ref.pvalue, rel=0.05)


def test_empty_network_table():
    t = influence_table(_panel([np.zeros((4, 4))] * 3), resamples=200)
    assert t.category("none").n == 24
    assert t.category("none").mean_total_years == 0 and t.category("none").mean_count == 0
    for c in ("maintained", "lost", "new"):
        assert t.category(c).n == 0 and math.isnan(t.category(c).mean_count)
    assert not any(c.applicable for c in t.comparisons)


def test_planted_common_senders():
    t = influence_table(planted_panel(), resamples=2000, seed=5)
    new, none = t.category("new"), t.category("none")
    assert new.n == 3 * 28 and new.mean_count == 2.0 and new.mean_duration == 5.0
    assert new.mean_total_years == 10.0
    assert none.mean_count < 0.3
    cmp = t.comparison("new", "none", "count")
    assert cmp.applicable and cmp.p_value < 0.001


@given(st.integers(0, 100_000), st.integers(3, 7), st.integers(2, 4))
def test_categories_partition_eligible_observations(seed, n, waves):
    rng = np.random.default_rng(seed)
    mats = [random_digraph(rng, n, 0.35) for _ in range(waves)]
    events = [CompositionEvent(str(n - 1), "birth", waves - 1)] if rng.random() < 0.5 else []
    p = _panel(mats, events=events)
    t = influence_table(p, resamples=1)
    expected = sum(int((~p.period_mask(k) & ~np.eye(n, dtype=bool)).sum()) for k in range(waves - 1))
    assert sum(c.n for c in t.categories) == expected
    assert [c.category for c in t.categories] == list(CATEGORIES)
    for c in t.categories:
        if c.n and c.mean_count:
            assert c.mean_total_years == pytest.approx(c.mean_duration * c.mean_count)


def test_table_needs_two_waves():
    with pytest.raises(NonparamError):
        influence_table(build_panel([(0, np.zeros((3, 3)))]))
