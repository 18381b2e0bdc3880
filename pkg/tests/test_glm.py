import math
import warnings

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import logit

from nrba import glm
from nrba.errors import (CellError, DegenerateResponseError, PerfectFitError, SeparationWarning,
                         SkippedTermWarning, UnseenLevelError)
from nrba.glm import DesignMatrixSpec, auc, fit_logistic, fit_ols, grow_tree, predict, stepwise_forward
from oracles import (auc_pairwise, best_split_bruteforce, exhaustive_forward_path, logistic_grid,
                     ols_normal_equations)

# 12-row logistic fixture: overlapping classes so the MLE is finite.
LOGIT_X = [-2.0, -1.5, -1.1, -0.7, -0.4, -0.1, 0.2, 0.5, 0.9, 1.3, 1.6, 2.2]
LOGIT_Y = [0, 0, 1, 0, 0, 1, 0, 1, 1, 0, 1, 1]


def test_two_point_interpolation():
    df = pd.DataFrame({"x": [0.0, 1.0], "y": [1.0, 3.0]})
    f = fit_ols(df, DesignMatrixSpec(("x",)), "y")
    assert f.coefficients["(Intercept)"] == pytest.approx(1.0, abs=1e-12)
    assert f.coefficients["x"] == pytest.approx(2.0, abs=1e-12)
    assert f.rss == 0.0 and f.perfect
    assert np.allclose(predict(f, df), df["y"])
    with pytest.raises(PerfectFitError):
        glm.aic(f)


def test_intercept_only_is_mean():
    df = pd.DataFrame({"y": [1.0, 2.0, 6.0, 7.0]})
    f = fit_ols(df, DesignMatrixSpec(()), "y")
    assert f.coefficients.iloc[0] == pytest.approx(4.0)
    rss = float(((df.y - 4.0) ** 2).sum())
    assert f.aic == pytest.approx(4 * math.log(rss / 4) + 2 * 2)


def test_ols_matches_normal_equations():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(20, 3))
    y = X @ [1.5, -2.0, 0.3] + rng.normal(size=20)
    df = pd.DataFrame(X, columns=["a", "b", "c"]).assign(y=y)
    f = fit_ols(df, DesignMatrixSpec(("a", "b", "c")), "y")
    oracle = ols_normal_equations(np.column_stack([np.ones(20), X]), y)
    assert np.max(np.abs(f.coefficients.to_numpy() - oracle)) < 1e-10
    resid = y - predict(f, df)
    Xd = glm.model_matrix(f, df)
    assert np.max(np.abs(Xd.T @ resid)) < 1e-8 * np.abs(y).max() * 20


def test_rank_deficient_column_dropped_first_come():
    rng = np.random.default_rng(1)
    a = rng.normal(size=30)
    df = pd.DataFrame({"a": a, "b": 2 * a, "c": rng.normal(size=30)})
    df["y"] = a + df.c + rng.normal(size=30)
    with pytest.warns(glm.RankDeficiencyWarning):
        f = fit_ols(df, DesignMatrixSpec(("a", "b", "c")), "y")
    assert f.dropped == ["b"]
    assert list(f.coefficients.index) == ["(Intercept)", "a", "c"]


def test_nested_models_identical_rss_differ_by_two():
    rng = np.random.default_rng(2)
    x = rng.normal(size=15)
    y = x + rng.normal(size=15)
    base = np.column_stack([np.ones(15), x])
    resid = y - base @ np.linalg.lstsq(base, y, rcond=None)[0]
    # a column orthogonal to the intercept, x and the residual cannot lower the rss
    A = np.column_stack([base, resid])
    v = rng.normal(size=15)
    z = v - A @ np.linalg.lstsq(A, v, rcond=None)[0]
    df = pd.DataFrame({"x": x, "z": z, "y": y})
    small = fit_ols(df, DesignMatrixSpec(("x",)), "y")
    big = fit_ols(df, DesignMatrixSpec(("x", "z")), "y")
    assert big.rss == pytest.approx(small.rss, rel=1e-10)
    assert big.aic - small.aic == pytest.approx(2.0, abs=1e-8)


def test_categorical_reference_coding_and_unseen_level():
    df = pd.DataFrame({"g": ["b", "a", "c", "a", "b", "c"], "y": [2.0, 1.0, 5.0, 1.2, 2.2, 4.8]})
    f = fit_ols(df, DesignMatrixSpec(("g",)), "y")
    assert list(f.coefficients.index) == ["(Intercept)", "g[b]", "g[c]"]
    assert f.coefficients["(Intercept)"] == pytest.approx(1.1)
    assert f.coefficients["g[c]"] == pytest.approx(3.8)
    with pytest.raises(UnseenLevelError) as exc:
        predict(f, pd.DataFrame({"g": ["d"]}))
    assert exc.value.column == "g" and exc.value.level == "d"
    with pytest.raises(CellError):
        predict(fit_ols(pd.DataFrame({"x": [1.0, 2, 3], "y": [1.0, 2, 4]}), DesignMatrixSpec(("x",)), "y"),
                pd.DataFrame({"x": [np.nan]}))


def test_prediction_matches_hand_expansion():
    df = pd.DataFrame({"x": [0.0, 1, 2, 3, 4], "g": ["u", "v", "u", "v", "u"],
                       "y": [1.0, 2.5, 2.9, 5.1, 5.2]})
    f = fit_ols(df, DesignMatrixSpec(("x", "g", "x:g")), "y")
    b = f.coefficients
    new = pd.DataFrame({"x": [10.0, -1.0], "g": ["v", "u"]})
    hand = [b["(Intercept)"] + 10 * b["x"] + b["g[v]"] + 10 * b["x:g[v]"],
            b["(Intercept)"] - b["x"]]
    assert np.allclose(predict(f, new), hand, atol=1e-12)


def test_logistic_intercept_only():
    df = pd.DataFrame({"r": [1] * 3 + [0] * 7})
    f = fit_logistic(df, DesignMatrixSpec(()), "r")
    assert f.converged
    assert f.coefficients.iloc[0] == pytest.approx(logit(0.3), abs=1e-10)
    assert glm.aic(f) == pytest.approx(f.deviance + 2)


def test_logistic_antisymmetric_fixture_sign():
    x = np.array([-3, -2, -1, 1, 2, 3, -3, -2, -1, 1, 2, 3], dtype=float)
    r = np.array([0, 0, 1, 0, 1, 1, 0, 1, 0, 1, 0, 1])
    f = fit_logistic(pd.DataFrame({"x": x, "r": r}), DesignMatrixSpec(("x",)), "r")
    assert f.coefficients["x"] > 0
    assert abs(f.coefficients["(Intercept)"]) < 1e-8


def test_logistic_matches_likelihood_grid():
    df = pd.DataFrame({"x": LOGIT_X, "r": LOGIT_Y})
    f = fit_logistic(df, DesignMatrixSpec(("x",)), "r")
    grid = logistic_grid(np.column_stack([np.ones(12), LOGIT_X]), np.array(LOGIT_Y, float))
    assert np.max(np.abs(f.coefficients.to_numpy() - grid)) < 1e-4
    X = np.column_stack([np.ones(12), LOGIT_X])
    assert np.max(np.abs(X.T @ (np.array(LOGIT_Y) - f.fitted))) < 1e-6
    assert predict(f, pd.DataFrame({"x": [-f.coefficients.iloc[0] / f.coefficients.iloc[1]]}))[0] == \
        pytest.approx(0.5)


def test_logistic_single_class_and_separation():
    with pytest.raises(DegenerateResponseError):
        fit_logistic(pd.DataFrame({"x": [1.0, 2, 3], "r": [1, 1, 1]}), DesignMatrixSpec(("x",)), "r")
    x = np.linspace(-1, 1, 20)
    df = pd.DataFrame({"x": x, "r": (x > 0).astype(int)})
    with pytest.warns(SeparationWarning):
        f = fit_logistic(df, DesignMatrixSpec(("x",)), "r")
    assert not f.converged


def _stepwise_fixture(seed, n=80, p=5, strong=True):
    rng = np.random.default_rng(seed)
    df = pd.DataFrame(rng.normal(size=(n, p)), columns=[f"x{j}" for j in range(p)])
    df["y"] = (1.5 * df.x2 if strong else 0.0) + 0.4 * df.x0 + rng.normal(size=n)
    return df


@pytest.mark.parametrize("seed", range(6))
def test_stepwise_linear_matches_exhaustive_oracle(seed):
    df = _stepwise_fixture(seed, p=6)
    cands = [f"x{j}" for j in range(6)]
    res = stepwise_forward(df, "y", cands)
    oracle = exhaustive_forward_path(df, "y", cands)
    assert [t for t, _ in res.path] == [t for t, _ in oracle]
    assert np.allclose([a for _, a in res.path], [a for _, a in oracle], atol=1e-8)
    assert res.path[1][0] == "x2"
    aics = [a for _, a in res.path]
    assert all(b < a for a, b in zip(aics, aics[1:]))


@pytest.mark.parametrize("seed", range(3))
def test_stepwise_with_interactions_and_factor(seed):
    rng = np.random.default_rng(100 + seed)
    n = 120
    df = pd.DataFrame({"a": rng.normal(size=n), "b": rng.normal(size=n),
                       "g": rng.choice(["p", "q", "s"], size=n), "c": rng.normal(size=n)})
    df["y"] = df.a + 0.8 * df.a * df.b + (df.g == "q") * 0.7 + rng.normal(size=n)
    cands = ["a", "b", "g", "c", "a:b", "a:g"]
    res = stepwise_forward(df, "y", cands)
    oracle = exhaustive_forward_path(df, "y", [("a",), ("b",), ("g",), ("c",), ("a", "b"), ("a", "g")])
    assert [t for t, _ in res.path] == [t for t, _ in oracle]
    assert np.allclose([a for _, a in res.path], [a for _, a in oracle], atol=1e-8)


@pytest.mark.parametrize("seed", range(3))
def test_stepwise_logistic_matches_exhaustive_oracle(seed):
    rng = np.random.default_rng(200 + seed)
    n = 300
    df = pd.DataFrame(rng.normal(size=(n, 4)), columns=["u", "v", "w", "z"])
    df["r"] = (rng.random(n) < 1 / (1 + np.exp(-(0.3 + 1.2 * df.v - 0.5 * df.z)))).astype(int)
    res = stepwise_forward(df, "r", ["u", "v", "w", "z"], family="logistic")
    oracle = exhaustive_forward_path(df, "r", ["u", "v", "w", "z"], family="logistic")
    assert [t for t, _ in res.path] == [t for t, _ in oracle]
    assert np.allclose([a for _, a in res.path], [a for _, a in oracle], atol=1e-6)


def test_stepwise_noise_returns_null_model():
    df = pd.DataFrame({"a": np.linspace(-1, 1, 10), "y": [0.5, -0.5] * 5})
    res = stepwise_forward(df, "y", ["a"])
    assert res.selected == []


def test_stepwise_skips_unusable_terms():
    df = _stepwise_fixture(9)
    df["const"] = 1.0
    df["empty"] = np.nan
    with pytest.warns(SkippedTermWarning):
        res = stepwise_forward(df, "y", ["x0", "x2", "const", "empty"])
    assert set(res.skipped) == {"const", "empty"}
    assert "x2" in res.selected


def test_stepwise_path_invariant_to_aic_shift(monkeypatch):
    df = _stepwise_fixture(4)
    base = stepwise_forward(df, "y", ["x0", "x1", "x2", "x3"])
    orig = glm._fit

    def shifted(*a, **k):
        f = orig(*a, **k)
        f.aic += 1234.5
        return f

    monkeypatch.setattr(glm, "_fit", shifted)
    moved = stepwise_forward(df, "y", ["x0", "x1", "x2", "x3"])
    assert [t for t, _ in moved.path] == [t for t, _ in base.path]


def test_tree_constant_response_is_leaf():
    df = pd.DataFrame({"x": np.arange(100.0), "y": 3.0})
    t = grow_tree(df, "y", ["x"], min_node=5)
    assert t.root.is_leaf and t.interactions == []


def test_tree_min_node_n_is_leaf():
    rng = np.random.default_rng(0)
    df = pd.DataFrame({"x": rng.normal(size=100), "y": rng.normal(size=100)})
    assert grow_tree(df, "y", ["x"], min_node=100).root.is_leaf
    with pytest.raises(ValueError):
        grow_tree(df, "y", ["x"], max_depth=0)


def test_tree_and_rule_fixture():
    rng = np.random.default_rng(7)
    n = 400
    df = pd.DataFrame({"x1": rng.normal(size=n), "x2": rng.normal(size=n), "x3": rng.normal(size=n)})
    df["y"] = ((df.x1 > 0) & (df.x2 > 0)).astype(float)
    t = grow_tree(df, "y", ["x1", "x2", "x3"], max_depth=2, min_node=10, criterion="sse")
    oracle = best_split_bruteforce(df, "y", ["x1", "x2", "x3"], min_node=10)
    assert t.root.column == oracle[0]
    assert t.root.threshold == pytest.approx(oracle[1])
    assert t.root.gain == pytest.approx(oracle[2], rel=1e-9)
    right = df[df[t.root.column] > t.root.threshold]
    child = best_split_bruteforce(right, "y", ["x1", "x2", "x3"], min_node=10)
    assert t.root.right.column == child[0]
    assert t.root.right.threshold == pytest.approx(child[1])
    assert {frozenset(p) for p in t.interactions} == {frozenset(("x1", "x2"))}


def test_tree_is_deterministic_and_ties_break_low():
    df = pd.DataFrame({"a": [0.0, 0, 1, 1], "b": [0.0, 0, 1, 1], "y": [0.0, 0, 1, 1]})
    t = grow_tree(df, "y", ["a", "b"], max_depth=1, min_node=1)
    assert t.root.column == "a"
    t2 = grow_tree(df, "y", ["a", "b"], max_depth=1, min_node=1)
    assert t.root == t2.root


def test_tree_categorical_split():
    df = pd.DataFrame({"g": ["a", "b", "c", "d"] * 25})
    df["y"] = df.g.map({"a": 0.0, "b": 5.0, "c": 0.2, "d": 5.1})
    t = grow_tree(df, "y", ["g"], max_depth=1, min_node=5)
    assert set(t.root.left_levels) == {"a", "c"}


def test_auc_edge_cases():
    assert auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0
    assert auc([0.5] * 6, [0, 1, 0, 1, 1, 0]) == 0.5
    with pytest.raises(DegenerateResponseError):
        auc([0.1, 0.2], [1, 1])


def test_auc_matches_pairwise_oracle_with_ties():
    rng = np.random.default_rng(42)
    for _ in range(20):
        s = rng.integers(0, 50, size=1000) / 7.0
        lab = (rng.random(1000) < 0.3).astype(int)
        assert auc(s, lab) == float(auc_pairwise(s, lab))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=4, max_size=60, unique=True),
       st.integers(0, 2 ** 31))
def test_auc_complement(scores, seed):
    lab = np.random.default_rng(seed).integers(0, 2, size=len(scores))
    if lab.min() == lab.max():
        lab[0] = 1 - lab[0]
    assert auc(scores, lab) + auc(scores, 1 - lab) == pytest.approx(1.0, abs=1e-12)
