import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from conftest import digraphs, random_digraph
from saomtrade import _kernel
from saomtrade.effects import (COVARIATE_KINDS, STRUCTURAL_KINDS, EffectError, EffectSpec,
                               actor_statistics, check_effects, contribution_matrix, dyad_statistic,
                               kernel_arrays, network_statistic, objective,
                               period_change_statistics, toggle_deltas)
from saomtrade.netpanel import CovariateSet

INTEGER_KINDS = [k for k in STRUCTURAL_KINDS if k != "outdeg_assortativity_sqrt"]


def _covs(rng, n, waves=2):
    return CovariateSet({"dist": rng.integers(0, 9, (n, n)).astype(float)},
                        {"gdp": rng.integers(-3, 4, (n, waves)).astype(float)})


def _cov_weights(kind, covs, wave):
    n = covs.dyadic["dist"].shape[0]
    if kind == "dyadic_covariate":
        return covs.dyadic["dist"].tolist()
    v = covs.actor_by_wave["gdp"][:, wave]
    return [[v[i] if kind == "covariate_ego" else v[j] for j in range(n)] for i in range(n)]


def _spec(kind, p="evaluation", beta=0.0):
    cov = None if kind in STRUCTURAL_KINDS else ("dist" if kind == "dyadic_covariate" else "gdp")
    return EffectSpec(kind, p, beta, cov)


def test_spec_validation():
    with pytest.raises(EffectError):
        EffectSpec("nonsense")
    with pytest.raises(EffectError):
        EffectSpec("density", "sometimes")
    with pytest.raises(EffectError):
        EffectSpec("dyadic_covariate")
    with pytest.raises(EffectError):
        check_effects([EffectSpec("density"), EffectSpec("density", beta=2.0)])
    check_effects([EffectSpec("density"), EffectSpec("density", "creation")])


@pytest.mark.parametrize("kind", INTEGER_KINDS + list(COVARIATE_KINDS))
def test_statistics_match_census(kind, rng):
    for _ in range(40):
        n = int(rng.integers(2, 10))
        x = random_digraph(rng, n, rng.uniform(0.1, 0.7))
        covs = _covs(rng, n)
        e = _spec(kind)
        w = _cov_weights(kind, covs, 1) if kind in COVARIATE_KINDS else None
        assert network_statistic(e, x, covs, 1) == oracles.census(kind, x.tolist(), w)


def test_sqrt_assortativity_matches_census(rng):
    e = EffectSpec("outdeg_assortativity_sqrt")
    for _ in range(40):
        x = random_digraph(rng, int(rng.integers(2, 10)), 0.4)
        assert network_statistic(e, x) == oracles.census(e.kind, x.tolist())


def test_worked_triad_counts():
    # 0 -> 1, 0 -> 2, 1 -> 2: one of each transitive configuration, no cycles
    x = np.array([[0, 1, 1], [0, 0, 1], [0, 0, 0]])
    assert network_statistic(EffectSpec("transitive_mediated_triads"), x) == 1
    assert network_statistic(EffectSpec("transitive_triads"), x) == 1
    assert network_statistic(EffectSpec("three_cycles"), x) == 0
    cyc = np.array([[0, 1, 0], [0, 0, 1], [1, 0, 0]])
    assert network_statistic(EffectSpec("three_cycles"), cyc) == 3


@pytest.mark.parametrize("kind", INTEGER_KINDS)
def test_dyad_statistic_matches_loop_oracle(kind, rng):
    x = random_digraph(rng, 7, 0.4)
    for i in range(7):
        for j in range(7):
            if i != j:
                assert dyad_statistic(_spec(kind), x, None, 0, i, j) == oracles.tie_contribution(kind, x.tolist(), i, j)


@given(digraphs(max_n=7), st.data())
def test_contribution_matrix_matches_dyad_loop(x, data):
    n = x.shape[0]
    rng = np.random.default_rng(n)
    covs = _covs(rng, n)
    kind = data.draw(st.sampled_from(STRUCTURAL_KINDS + COVARIATE_KINDS))
    e = _spec(kind)
    c = contribution_matrix(e, x, covs, 0)
    for i in range(n):
        for j in range(n):
            if i != j:
                assert c[i, j] == pytest.approx(dyad_statistic(e, x, covs, 0, i, j), rel=1e-12)


@given(digraphs(max_n=7), st.data())
def test_toggle_deltas_match_recomputation(x, data):
    n = x.shape[0]
    covs = _covs(np.random.default_rng(n), n)
    kind = data.draw(st.sampled_from(STRUCTURAL_KINDS + COVARIATE_KINDS))
    i = data.draw(st.integers(0, n - 1))
    e = _spec(kind)
    d = toggle_deltas(e, x, covs, 0, i)
    base = actor_statistics(e, x, covs, 0)[i]
    for j in range(n):
        if j == i:
            continue
        y = x.copy()
        y[i, j] = 1 - y[i, j]
        assert d[j] == pytest.approx(actor_statistics(e, y, covs, 0)[i] - base, abs=1e-9)


@given(digraphs(max_n=6), digraphs(max_n=6), st.data())
def test_creation_plus_endowment_is_evaluation(x0, x1, data):
    n = min(x0.shape[0], x1.shape[0])
    x0, x1 = x0[:n, :n], x1[:n, :n]
    covs = _covs(np.random.default_rng(n), n)
    kind = data.draw(st.sampled_from(STRUCTURAL_KINDS + COVARIATE_KINDS))
    eff = [_spec(kind, p) for p in ("evaluation", "creation", "endowment")]
    ev, cr, en = period_change_statistics(x0, x1, covs, eff, 0)
    assert ev == pytest.approx(cr + en, abs=1e-9)


def _loop_period_statistic(kind, p, x0, x1, w):
    n = len(x0)
    c0 = [[oracles.tie_contribution(kind, x0, i, j, w) if i != j else 0 for j in range(n)] for i in range(n)]
    c1 = [[oracles.tie_contribution(kind, x1, i, j, w) if i != j else 0 for j in range(n)] for i in range(n)]
    s = 0
    for i in range(n):
        for j in range(n):
            if p == "creation":
                s += (1 - x0[i][j]) * x1[i][j] * c1[i][j]
            elif p == "endowment":
                s += x0[i][j] * (x1[i][j] * c1[i][j] - c0[i][j])
    return s


@pytest.mark.parametrize("kind", ["density", "reciprocity", "transitive_mediated_triads", "dyadic_covariate"])
@pytest.mark.parametrize("p", ["creation", "endowment"])
def test_creation_endowment_against_loop_oracle(kind, p, rng):
    for _ in range(10):
        n = 6
        x0, x1 = random_digraph(rng, n, 0.4), random_digraph(rng, n, 0.4)
        covs = _covs(rng, n)
        w = _cov_weights(kind, covs, 0) if kind == "dyadic_covariate" else None
        got = period_change_statistics(x0, x1, covs, [_spec(kind, p)], 0)[0]
        assert got == _loop_period_statistic(kind, p, x0.tolist(), x1.tolist(), w)


def test_kernel_period_statistics_match_numpy(rng):
    effects = [_spec(k, p) for k in STRUCTURAL_KINDS + COVARIATE_KINDS
               for p in ("evaluation", "creation", "endowment")]
    for _ in range(20):
        n = int(rng.integers(2, 11))
        x0 = random_digraph(rng, n, 0.3)
        x1 = random_digraph(rng, n, 0.3)
        covs = _covs(rng, n)
        codes, ptypes, _, covmats = kernel_arrays(effects, covs, n, 1)
        got = _kernel.period_statistics(x0, x1, codes, ptypes, covmats)
        np.testing.assert_allclose(got, period_change_statistics(x0, x1, covs, effects, 1), rtol=1e-12, atol=1e-12)


def test_objective_is_weighted_sum():
    x = np.array([[0, 1, 1], [1, 0, 0], [1, 1, 0]])
    eff = [EffectSpec("density", beta=-2.0), EffectSpec("reciprocity", beta=0.5)]
    # actor 0: 2 ties, both reciprocated
    assert objective(x, None, 0, 0, eff) == pytest.approx(-4.0 + 1.0)


def test_unknown_covariate():
    x = np.zeros((2, 2), dtype=int)
    with pytest.raises(EffectError, match="unknown"):
        network_statistic(EffectSpec("dyadic_covariate", covariate="nope"), x, CovariateSet())
