import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nrba import simlab
from nrba.errors import InsufficientDataError, UnstableSimulationWarning, VacuousBiasWarning
from nrba.simlab import (CellSpec, MechanismSpec, Population, PopulationSpec, apply_mechanism,
                         gen_population, mi_impute, response_probability, rubin_combine, run_cell,
                         true_bias, tuned_intercept)


def test_independent_population():
    pop = gen_population(PopulationSpec(N=20_000, rho=0.0), 1)
    assert abs(np.corrcoef(pop.x, pop.y)[0, 1]) < 4 / math.sqrt(20_000)


def test_degenerate_correlation_rejected():
    with pytest.raises(ValueError):
        PopulationSpec(N=10, rho=1 - 1e-9)
    with pytest.raises(ValueError):
        PopulationSpec(N=10, var_x=0.0)


def test_population_moments_within_clt_bounds():
    spec = PopulationSpec(N=100_000, mu_x=2.0, mu_y=-1.0, var_x=4.0, var_y=9.0, rho=0.6)
    pop = gen_population(spec, 7)
    N = spec.N
    assert abs(pop.x.mean() - 2.0) < 4 * math.sqrt(4.0 / N)
    assert abs(pop.y.mean() + 1.0) < 4 * math.sqrt(9.0 / N)
    assert abs(pop.x.var() - 4.0) < 4 * math.sqrt(2 * 16.0 / N)
    assert abs(pop.y.var() - 9.0) < 4 * math.sqrt(2 * 81.0 / N)
    assert abs(np.corrcoef(pop.x, pop.y)[0, 1] - 0.6) < 4 * (1 - 0.36) / math.sqrt(N)


def test_mechanism_rates():
    pop = gen_population(PopulationSpec(N=40_000, rho=0.5), 3)
    r = apply_mechanism(pop, MechanismSpec("MCAR"), 4)
    assert abs(r.mean() - 0.5) < 4 * math.sqrt(0.25 / pop.N)
    r2 = apply_mechanism(pop, MechanismSpec("MAR", psi0=0.0, psi1=0.0), 5)
    assert abs(r2.mean() - 0.5) < 4 * math.sqrt(0.25 / pop.N)


def test_mechanism_spec_invariants():
    with pytest.raises(ValueError):
        MechanismSpec("MCAR", psi1=1.0)
    with pytest.raises(ValueError):
        MechanismSpec("MAR", psi1=1.0, phi=0.5)
    with pytest.raises(ValueError):
        MechanismSpec("MNAR", phi=0.5, link="probit")


def test_mnar_phi_one_depends_on_y_only():
    spec = PopulationSpec(N=4, rho=0.3)
    pop = Population(x=np.array([-2.0, 3.0, 0.5, 1.0]), y=np.array([1.0, 1.0, 1.0, -1.0]), spec=spec)
    p = response_probability(pop, MechanismSpec("MNAR", psi0=0.2, psi1=1.5, phi=1.0))
    assert p[0] == p[1] == p[2] != p[3]


def test_true_bias_cases():
    y = np.array([1.0, 3.0, 1.0, 3.0])
    assert true_bias(y, np.array([1, 1, 0, 0], bool)).value == 0.0
    with pytest.warns(VacuousBiasWarning):
        tb = true_bias(y, np.ones(4, bool))
    assert tb.value == 0.0 and tb.vacuous


@settings(max_examples=200)
@given(st.integers(0, 2 ** 32 - 1), st.integers(2, 200))
def test_true_bias_identity(seed, n):
    rng = np.random.default_rng(seed)
    y = rng.normal(size=n) * 10
    r = rng.random(n) < 0.5
    r[0], r[1] = True, False
    assert abs(true_bias(y, r).value - (y[r].mean() - y.mean())) < 1e-12


def test_rubin_hand_fixture():
    res = rubin_combine([1.0, 3.0], [1.0, 1.0])
    assert res.estimate == 2.0 and res.total == 4.0
    same = rubin_combine([2.0, 2.0, 2.0], [0.5, 0.7, 0.9])
    assert same.between == 0.0 and same.total == pytest.approx(0.7)
    with pytest.raises(ValueError):
        rubin_combine([1.0], [1.0])


@settings(max_examples=200)
@given(st.lists(st.tuples(st.floats(-1e3, 1e3), st.floats(0, 1e3)), min_size=2, max_size=30))
def test_rubin_total_at_least_within(pairs):
    q, u = zip(*pairs)
    res = rubin_combine(q, u)
    assert res.total >= res.within - 1e-12 * max(1.0, abs(res.within))


def test_mi_without_noise_returns_predictions():
    X = np.column_stack([np.ones(6), np.arange(6.0)])
    y = np.array([1.0, 3.0, 5.0, 7.0, np.nan, np.nan])  # exact line, residual sd 0
    out = mi_impute(X, y, 3, 0, draw_parameters=False)
    for filled in out:
        assert np.allclose(filled[4:], [9.0, 11.0])
    with pytest.raises(InsufficientDataError):
        mi_impute(X, y, 3, 0)


def test_mi_imputations_vary():
    rng = np.random.default_rng(0)
    X = np.column_stack([np.ones(50), rng.normal(size=50)])
    y = X @ [1.0, 2.0] + rng.normal(size=50)
    y[40:] = np.nan
    out = mi_impute(X, y, 4, 1)
    assert np.all(np.ptp(np.array([o[40:] for o in out]), axis=0) > 0)
    assert all(np.array_equal(o[:40], y[:40]) for o in out)


def test_tuned_intercept_hits_rate():
    for slope in (0.0, 0.1, 1.0, 2.5):
        psi0 = tuned_intercept(slope, 0.6)
        z = np.random.default_rng(0).standard_normal(400_000)
        assert abs(np.mean(1 / (1 + np.exp(-(psi0 + slope * z)))) - 0.6) < 2e-3


def test_cell_code_validation_and_reps_warning():
    with pytest.raises(ValueError):
        CellSpec("HXL")
    with pytest.warns(UnstableSimulationWarning):
        run_cell("LLL", reps=10, n=200, seed=0, m=2)


def test_run_cell_deterministic():
    a = run_cell("HHL", reps=60, n=300, seed=5, m=5)
    b = run_cell("HHL", reps=60, n=300, seed=5, m=5)
    for k in a:
        assert np.array_equal(a[k].estimates, b[k].estimates)
        assert a[k].bias == b[k].bias and a[k].mcse > 0


def test_mcar_all_methods_unbiased():
    res = run_cell(CellSpec("LHH", low=0.0), reps=300, n=500, seed=1, m=5)
    for meth, r in res.items():
        assert abs(r.bias) < 3 * r.mcse, meth


def test_mar_cc_biased_ipw_mi_unbiased():
    res = run_cell("HHL", reps=300, n=500, seed=2, m=5)
    assert abs(res["CC"].bias) > 3 * res["CC"].mcse
    assert abs(res["IPW"].bias) < 3 * res["IPW"].mcse
    assert abs(res["MI"].bias) < 3 * res["MI"].mcse


def test_variance_contrast_matches_direct_difference():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=100), rng.normal(size=100) * 2
    d, se = simlab.variance_contrast(a, b)
    assert d == pytest.approx(a.var(ddof=1) - b.var(ddof=1), rel=1e-12)
    assert se > 0
    db, _ = simlab.abs_bias_contrast(a + 1, b + 3)
    assert db == pytest.approx(abs(a.mean() + 1) - abs(b.mean() + 3), rel=1e-12)


def test_ppmm_recovery_identity_small():
    out = simlab.ppmm_recovery(0.5, reps=20, N=2000, seed=3)
    assert out["identity_gap"] < 1e-12
    assert out["errors"].shape == (20, 3)


def test_ecls_like_dataset_shape():
    df = simlab.ecls_like_dataset()
    assert df.shape == (5000, 27)
    assert abs(df.responded.mean() - 0.87) < 0.01
    assert (df.reading == -9).sum() > 0
