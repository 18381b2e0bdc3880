"""Response-propensity models, stagewise composition, quintile strata, and IPW weights."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import ClampWarning, DegenerateStrataWarning, EmptyStratumWarning, InsufficientDataError
from .glm import DesignMatrixSpec, LogisticFit, auc, fit_logistic, predict

log = logging.getLogger(__name__)

CLAMP = (0.01, 0.99)
QUANTILE_PROBS = (0.2, 0.4, 0.6, 0.8)


@dataclass
class PropensityModel:
    fit: LogisticFit
    phat: np.ndarray
    auc: float
    level: str = "single-stage"
    eligible: np.ndarray = None


def fit_stage_propensity(data, response_indicator: str, predictors, eligible=None,
                         level: str = "single-stage") -> PropensityModel:
    """Logistic model of a response indicator, scored on every eligible row.

    For a conditional stage pass ``eligible`` as the mask of units that
    responded at the earlier stage; the model is fit on those rows only.
    The AUC is computed on the rows used for fitting.
    """
    frame = data.frame() if hasattr(data, "frame") else data
    spec = predictors if isinstance(predictors, DesignMatrixSpec) else DesignMatrixSpec(tuple(predictors))
    n = len(frame)
    elig = np.ones(n, dtype=bool) if eligible is None else np.asarray(eligible, dtype=bool)
    fit = fit_logistic(frame, spec, response_indicator, rows=elig)
    phat = predict(fit, frame.loc[elig], scale="response")
    labels = frame.loc[elig, response_indicator].to_numpy(dtype=float)
    return PropensityModel(fit=fit, phat=phat, auc=auc(phat, labels), level=level, eligible=elig)


@dataclass
class ComposedPropensity:
    probability: np.ndarray
    flagged: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))


def clamp(p, bounds=CLAMP):
    lo, hi = bounds
    p = np.asarray(p, dtype=float)
    out = np.clip(p, lo, hi)
    k = int(np.sum(out != p))
    if k:
        log.info("clamped %d probabilities to [%g, %g]", k, lo, hi)
        warnings.warn(f"{k} probabilities clamped to [{lo}, {hi}]", ClampWarning)
    return out


def compose_propensities(stages, bounds=CLAMP) -> ComposedPropensity:
    """Overall response probability as the product of stagewise conditional probabilities.

    Each stage is a :class:`PropensityModel` scored on all units or a plain
    probability array. Units whose stage probability is 0 or 1 after the
    clamping policy are flagged (the default clamp makes that impossible;
    pass ``bounds=(0, 1)`` to disable clamping).
    """
    arrays = [np.asarray(s.phat if hasattr(s, "phat") else s, dtype=float) for s in stages]
    if not arrays:
        raise ValueError("no stages given")
    n = arrays[0].size
    if any(a.size != n for a in arrays):
        raise ValueError("stages must be scored on the same units")
    total = np.ones(n)
    flagged = np.zeros(n, dtype=bool)
    lo, hi = bounds
    for a in arrays:
        a = np.clip(a, lo, hi)
        flagged |= (a <= 0) | (a >= 1)
        total = total * a
    return ComposedPropensity(probability=total, flagged=np.flatnonzero(flagged))


@dataclass
class PropensityStrata:
    breaks: np.ndarray
    stratum: np.ndarray
    n_strata: int


def quintile_strata(phat, probs=QUANTILE_PROBS) -> PropensityStrata:
    """Group units by the quintiles of their propensities.

    Cut points are linear-interpolation sample quantiles; a value equal to a
    cut point goes to the lower stratum. Repeated cut points are merged, so
    fewer than five distinct propensities yield fewer strata (with a
    :class:`DegenerateStrataWarning`). Strata are numbered from 1.
    """
    p = np.asarray(phat, dtype=float)
    if p.size < len(probs) + 1:
        raise InsufficientDataError(f"need at least {len(probs) + 1} units, got {p.size}")
    breaks = np.quantile(p, probs)
    inner = np.unique(breaks)
    raw = np.searchsorted(inner, p, side="left") + 1
    used = np.unique(raw)
    stratum = np.searchsorted(used, raw) + 1
    if np.unique(p).size < len(probs) + 1 or used.size < len(probs) + 1:
        warnings.warn(f"only {used.size} propensity strata formed", DegenerateStrataWarning)
    return PropensityStrata(breaks=breaks, stratum=stratum, n_strata=int(used.size))


def _pearson(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    da, db = a - a.mean(), b - b.mean()
    den = np.sqrt((da @ da) * (db @ db))
    return float(da @ db / den) if den > 0 else 0.0


def stratum_outcome_summary(strata: PropensityStrata, outcome, phat, n_strata: int = 5):
    """Five-number summary and mean of the outcome within each stratum.

    Returns ``(table, correlation)`` where correlation is the Pearson
    correlation between propensity and outcome over units with an observed
    outcome (0 when either is constant).
    """
    y = np.asarray(outcome, dtype=float)
    p = np.asarray(phat, dtype=float)
    ok = ~np.isnan(y)
    recs = []
    empty = []
    for s in range(1, max(n_strata, strata.n_strata) + 1):
        v = y[(strata.stratum == s) & ok]
        if v.size == 0:
            empty.append(s)
            recs.append({"stratum": s, "n": 0, "min": np.nan, "q1": np.nan, "median": np.nan,
                         "q3": np.nan, "max": np.nan, "mean": np.nan})
            continue
        q = np.quantile(v, [0, 0.25, 0.5, 0.75, 1])
        recs.append({"stratum": s, "n": int(v.size), "min": q[0], "q1": q[1], "median": q[2],
                     "q3": q[3], "max": q[4], "mean": float(v.mean())})
    if empty:
        warnings.warn(f"empty propensity strata {empty}", EmptyStratumWarning)
    return pd.DataFrame(recs), _pearson(p[ok], y[ok])


def propensity_histogram(phat, bins: int = 20):
    """Bin edges and counts of propensities over [0, 1]."""
    counts, edges = np.histogram(np.asarray(phat, dtype=float), bins=bins, range=(0.0, 1.0))
    return pd.DataFrame({"lower": edges[:-1], "upper": edges[1:], "count": counts})


def ipw_weights(probability, base_weight=None, bounds=CLAMP) -> np.ndarray:
    """Inverse-propensity weights ``base_weight / p`` after clamping ``p``."""
    p = clamp(probability, bounds)
    base = np.ones_like(p) if base_weight is None else np.asarray(base_weight, dtype=float)
    if base.shape != p.shape:
        raise ValueError("base weights and probabilities differ in length")
    return base / p
