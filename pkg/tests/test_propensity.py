import warnings

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nrba.errors import ClampWarning, DegenerateStrataWarning, EmptyStratumWarning, SeparationWarning
from nrba.glm import DesignMatrixSpec
from nrba.propensity import (PropensityStrata, clamp, compose_propensities, fit_stage_propensity,
                             ipw_weights, propensity_histogram, quintile_strata,
                             stratum_outcome_summary)
from oracles import quintile_by_rank


def test_pure_noise_propensity():
    rng = np.random.default_rng(0)
    n = 4000
    df = pd.DataFrame({"x": rng.normal(size=n)})
    df["r"] = (rng.random(n) < 0.7).astype(int)
    m = fit_stage_propensity(df, "r", ["x"])
    assert abs(m.auc - 0.5) < 0.03
    assert np.all(np.abs(m.phat - df.r.mean()) < 0.03)
    assert m.level == "single-stage"


def test_deterministic_indicator_gives_perfect_auc():
    x = np.linspace(-1, 1, 40)
    df = pd.DataFrame({"x": x, "r": (x > np.median(x)).astype(int)})
    with pytest.warns(SeparationWarning):
        m = fit_stage_propensity(df, "r", ["x"])
    assert m.auc == 1.0


def test_known_mar_coefficients_recovered():
    rng = np.random.default_rng(1)
    n = 5000
    df = pd.DataFrame({"a": rng.normal(size=n), "b": rng.normal(size=n)})
    eta = 0.4 + 0.8 * df.a - 0.5 * df.b
    df["r"] = (rng.random(n) < 1 / (1 + np.exp(-eta))).astype(int)
    m = fit_stage_propensity(df, "r", DesignMatrixSpec(("a", "b")))
    se = np.sqrt(np.diag(m.fit.cov))
    z = (m.fit.coefficients.to_numpy() - [0.4, 0.8, -0.5]) / se
    assert np.all(np.abs(z) < 3)


def test_conditional_stage_fits_on_eligible_only():
    rng = np.random.default_rng(2)
    n = 3000
    df = pd.DataFrame({"x": rng.normal(size=n)})
    r1 = rng.random(n) < 0.8
    df["r2"] = np.where(r1, (rng.random(n) < 1 / (1 + np.exp(-df.x))).astype(int), 0)
    m = fit_stage_propensity(df, "r2", ["x"], eligible=r1, level="conditional-stage")
    assert m.fit.n == r1.sum() and m.phat.size == r1.sum()


def test_composition_examples():
    p = np.array([0.2, 0.5, 0.9])
    assert np.array_equal(compose_propensities([p]).probability, p)
    out = compose_propensities([np.full(4, 0.69), np.full(4, 0.87)])
    assert np.allclose(out.probability, 0.6003, atol=1e-12)
    assert out.flagged.size == 0
    flagged = compose_propensities([np.array([0.0, 0.5])], bounds=(0.0, 1.0))
    assert list(flagged.flagged) == [0]


@settings(max_examples=100)
@given(st.lists(st.floats(0.05, 0.95), min_size=1, max_size=30))
def test_composition_with_identity_stage(ps):
    p = np.array(ps)
    a = compose_propensities([p, np.ones(p.size)], bounds=(0.0, 1.0)).probability
    assert np.array_equal(a, p)


def test_two_stage_simulated_nesting():
    rng = np.random.default_rng(3)
    n = 20_000
    x = rng.normal(size=n)
    p1 = 1 / (1 + np.exp(-(1.0 + 0.5 * x)))
    p2 = 1 / (1 + np.exp(-(0.5 - 0.7 * x)))
    r1 = rng.random(n) < p1
    r2 = r1 & (rng.random(n) < p2)
    prod = compose_propensities([p1, p2]).probability
    se = np.sqrt(np.mean(prod * (1 - prod)) / n)
    assert abs(r2.mean() - prod.mean()) < 4 * se


def test_quintiles_of_distinct_values():
    s = quintile_strata(np.arange(100.0))
    assert np.bincount(s.stratum)[1:].tolist() == [20] * 5
    assert np.all(np.diff(s.breaks) >= 0)


def test_all_equal_propensities_single_stratum():
    with pytest.warns(DegenerateStrataWarning):
        s = quintile_strata(np.full(10, 0.4))
    assert s.n_strata == 1 and set(s.stratum) == {1}


def test_ties_go_to_lower_stratum():
    p = np.array([0.1, 0.2, 0.2, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9])
    s = quintile_strata(p)
    # the 0.2 break equals three values; all three share the first stratum
    assert s.breaks[0] == pytest.approx(0.2)
    assert set(s.stratum[:4]) == {1}


@pytest.mark.parametrize("seed", range(10))
def test_quintiles_match_rank_oracle(seed):
    rng = np.random.default_rng(seed)
    p = rng.random(rng.integers(5, 400))
    assert np.array_equal(quintile_strata(p).stratum, quintile_by_rank(p))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0.001, 0.999), min_size=5, max_size=80))
def test_quintiles_invariant_to_increasing_transform(ps):
    p = np.array(ps)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        a = quintile_strata(p).stratum
        b = quintile_strata(np.log(p / (1 - p))).stratum
    assert np.array_equal(a, b)


def test_summary_identical_outcome_and_correlations():
    p = np.linspace(0.1, 0.9, 50)
    s = quintile_strata(p)
    table, corr = stratum_outcome_summary(s, np.full(50, 3.0), p)
    assert corr == 0.0
    assert (table["median"] == 3.0).all() and (table["max"] == 3.0).all()
    _, corr = stratum_outcome_summary(s, p, p)
    assert corr == pytest.approx(1.0)
    rng = np.random.default_rng(5)
    y = rng.normal(size=50)
    _, corr = stratum_outcome_summary(s, y, p)
    hand = ((p - p.mean()) @ (y - y.mean())) / np.sqrt(((p - p.mean()) ** 2).sum() * ((y - y.mean()) ** 2).sum())
    assert corr == pytest.approx(hand, abs=1e-12)


def test_empty_stratum_reported():
    s = PropensityStrata(breaks=np.zeros(4), stratum=np.array([1, 1, 2, 2, 3, 3]), n_strata=5)
    with pytest.warns(EmptyStratumWarning):
        table, _ = stratum_outcome_summary(s, np.arange(6.0), np.linspace(0, 1, 6))
    assert table["n"].tolist() == [2, 2, 2, 0, 0]


def test_ipw_weights_and_clamp():
    assert ipw_weights(np.array([0.5]))[0] == 2.0
    base = np.array([1.0, 2.0, 4.0])
    w = ipw_weights(np.full(3, 0.25), base)
    assert np.allclose(w / base, 4.0)
    with pytest.warns(ClampWarning):
        assert clamp(np.array([0.0, 1.0]))[0] == 0.01


@pytest.mark.filterwarnings("ignore::nrba.errors.ClampWarning")
def test_ipw_sum_estimates_eligible_count():
    rng = np.random.default_rng(9)
    totals = []
    for _ in range(200):
        n = 1000
        x = rng.normal(size=n)
        p = 1 / (1 + np.exp(-(0.5 + 0.8 * x)))
        r = rng.random(n) < p
        totals.append(ipw_weights(p[r]).sum())
    totals = np.array(totals)
    assert abs(totals.mean() - 1000) < 3 * totals.std(ddof=1) / np.sqrt(totals.size)


def test_histogram_bins():
    h = propensity_histogram(np.array([0.05, 0.07, 0.51, 1.0]), bins=10)
    assert h["count"].sum() == 4 and h["count"].iloc[0] == 2 and h["count"].iloc[-1] == 1
