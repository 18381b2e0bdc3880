"""Design-based means, linearized standard errors, design effects, and weight adjustments.

Variances use the with-replacement approximation for the first-stage
units: residual totals are formed per PSU within stratum and their spread
is scaled by ``a/(a-1)`` for a stratum holding ``a`` PSUs. No finite
population correction is applied.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import InfeasibleError, NrbaError, RakingWarning, VarianceUndefinedError


@dataclass
class SurveyDesign:
    weight: np.ndarray
    psu: np.ndarray = None
    stratum: np.ndarray = None

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=float)
        n = self.weight.size
        if not np.all(np.isfinite(self.weight)) or np.any(self.weight < 0):
            raise ValueError("weights must be finite and non-negative")
        if not np.any(self.weight > 0):
            raise ValueError("at least one weight must be positive")
        self.psu = np.arange(n) if self.psu is None else np.asarray(self.psu)
        self.stratum = np.zeros(n, dtype=int) if self.stratum is None else np.asarray(self.stratum)
        if self.psu.size != n or self.stratum.size != n:
            raise ValueError("psu, stratum and weight must have the same length")

    @property
    def n(self) -> int:
        return self.weight.size

    @classmethod
    def unweighted(cls, n, psu=None, stratum=None) -> "SurveyDesign":
        return cls(np.ones(n), psu, stratum)

    def reweight(self, weight) -> "SurveyDesign":
        return SurveyDesign(weight, self.psu, self.stratum)


@dataclass
class EstimateRow:
    label: str
    mean: float
    se: float
    deff: float = None
    n: int = 0
    n_effective: float = None

    def as_dict(self) -> dict:
        return {"label": self.label, "mean": self.mean, "se": self.se, "deff": self.deff,
                "n": self.n, "n_effective": self.n_effective}


def _psu_index(design: SurveyDesign):
    keys = pd.MultiIndex.from_arrays([pd.Series(design.stratum).astype(str),
                                      pd.Series(design.psu).astype(str)])
    codes, uniq = pd.factorize(keys, sort=True)
    strata_of_psu = np.array([s for s, _ in uniq])
    return codes, strata_of_psu


def linearized_variance(z, design: SurveyDesign) -> float:
    """Between-PSU variance of per-row linearization scores ``z``, summed over strata."""
    codes, strata_of_psu = _psu_index(design)
    totals = np.bincount(codes, weights=np.asarray(z, dtype=float), minlength=strata_of_psu.size)
    var = 0.0
    for h in np.unique(strata_of_psu):
        t = totals[strata_of_psu == h]
        a = t.size
        if a < 2:
            raise VarianceUndefinedError(f"stratum {h!r} has a single PSU; variance undefined")
        var += a / (a - 1) * float(np.sum((t - t.mean()) ** 2))
    return var


def _domain(values, design, domain):
    y = np.asarray(values, dtype=float)
    if y.size != design.n:
        raise ValueError("values and design differ in length")
    d = ~np.isnan(y) & (design.weight > 0)
    if domain is not None:
        d &= np.asarray(domain, dtype=bool)
    return np.where(d, y, 0.0), d


def _srs_variance(y, w, d, mean):
    n = int(d.sum())
    if n < 2:
        return 0.0
    wd = w * d
    s2 = float(np.sum(wd * (y - mean) ** 2) / wd.sum()) * n / (n - 1)
    return s2 / n


def weighted_mean(values, design: SurveyDesign, domain=None, label: str = "") -> EstimateRow:
    """Weighted (ratio) mean with its Taylor-linearized standard error and design effect.

    Rows with a missing value, zero weight, or outside ``domain`` contribute
    zero scores but keep their PSU, so subgroup variances follow the domain
    estimation approach.
    """
    y, d = _domain(values, design, domain)
    n = int(d.sum())
    if n == 0:
        raise NrbaError(f"no observed values in domain {label!r}")
    w = design.weight
    W = float(np.sum(w * d))
    mean = float(np.sum(w * d * y) / W)
    z = w * d * (y - mean) / W
    var = linearized_variance(z, design)
    srs = _srs_variance(y, w, d, mean)
    deff = var / srs if srs > 0 else None
    return EstimateRow(label=label, mean=mean, se=math.sqrt(var), deff=deff, n=n,
                       n_effective=(n / deff) if deff else None)


def design_effect(values, design: SurveyDesign, domain=None) -> float:
    """Linearized variance of the weighted mean over the simple-random-sampling variance ``s^2/n``.

    ``s^2`` is the weighted estimate of the population variance with the
    ``n/(n-1)`` correction, which is the ordinary sample variance under equal weights.
    """
    y, d = _domain(values, design, domain)
    w = design.weight
    W = float(np.sum(w * d))
    mean = float(np.sum(w * d * y) / W)
    srs = _srs_variance(y, w, d, mean)
    if srs <= 0:
        raise VarianceUndefinedError("zero simple-random-sampling variance")
    z = w * d * (y - mean) / W
    return linearized_variance(z, design) / srs


def weighting_class_adjust(design: SurveyDesign, responded, classes) -> SurveyDesign:
    """Weighting-class nonresponse adjustment.

    Within each class, respondent weights are multiplied by (sum of eligible
    weights) / (sum of respondent weights); nonrespondents get weight 0.
    """
    r = np.asarray(responded, dtype=bool)
    cls = pd.Series(np.asarray(classes, dtype=object)).astype(str).to_numpy()
    if r.size != design.n or cls.size != design.n:
        raise ValueError("responded/classes length differs from the design")
    w = design.weight
    out = np.zeros_like(w)
    empty = []
    for c in sorted(set(cls)):
        rows = cls == c
        elig = float(w[rows].sum())
        resp = float(w[rows & r].sum())
        if resp <= 0:
            if elig > 0:
                empty.append(c)
            continue
        out[rows & r] = w[rows & r] * (elig / resp)
    if empty:
        raise InfeasibleError(f"weighting classes without respondents: {empty}; collapse them")
    return design.reweight(out)


@dataclass
class RakeResult:
    converged: bool
    iterations: int
    max_discrepancy: float
    discrepancies: list = field(default_factory=list)


def _margin_cells(values, target, positive):
    vals = pd.Series(np.asarray(values, dtype=object)).astype(str).to_numpy()
    tgt = {str(k): float(v) for k, v in target.items()}
    if any(v <= 0 for v in tgt.values()):
        raise InfeasibleError("raking targets must be positive")
    present = set(vals[positive])
    absent = sorted(set(tgt) - present)
    if absent:
        raise InfeasibleError(f"raking categories {absent} have no positive-weight rows")
    extra = sorted(present - set(tgt))
    if extra:
        raise InfeasibleError(f"categories {extra} have no raking target")
    return [(vals == k, t) for k, t in sorted(tgt.items())]


def rake(design: SurveyDesign, margins, max_iter: int = 100, tol: float = 1e-8):
    """Iterative proportional fitting of the weights to control totals.

    ``margins`` is a list of ``(values, {category: target})`` pairs. Iteration
    stops when every weighted margin is within ``tol`` of its target
    (absolute difference). Rows with zero weight are left at zero.

    Returns ``(design, RakeResult)``; on non-convergence the result carries
    the final discrepancies and a :class:`RakingWarning` is issued.
    """
    w = design.weight.copy()
    positive = w > 0
    cells = [_margin_cells(v, t, positive) for v, t in margins]

    def discrepancies():
        return [max(abs(float(w[rows].sum()) - t) for rows, t in m) for m in cells]

    it = 0
    disc = discrepancies()
    converged = max(disc) <= tol
    while not converged and it < max_iter:
        it += 1
        for m in cells:
            for rows, t in m:
                cur = float(w[rows].sum())
                w[rows] *= t / cur
        disc = discrepancies()
        converged = max(disc) <= tol
    if not converged:
        warnings.warn(f"raking did not converge in {max_iter} iterations; "
                      f"max discrepancy {max(disc):.3g}", RakingWarning)
    return design.reweight(w), RakeResult(converged, it, float(max(disc)), disc)


def comparison_table(values, designs: dict, subgroups: dict | None = None,
                     label: str = "") -> pd.DataFrame:
    """Estimates for every design, overall and within each subgroup level.

    ``designs`` maps a label to a :class:`SurveyDesign` over the same rows;
    ``subgroups`` maps a variable name to its per-row values. Returns a long
    table with one line per (design, subgroup level).
    """
    n = np.asarray(values).size
    if any(ds.n != n for ds in designs.values()):
        raise ValueError("designs must share the row universe of the values")
    domains = [("overall", "all", None)]
    for var, vals in (subgroups or {}).items():
        vals = pd.Series(np.asarray(vals, dtype=object))
        for lev in sorted(vals.dropna().unique(), key=str):
            domains.append((var, lev, (vals == lev).to_numpy()))
    recs = []
    for dlabel, ds in designs.items():
        for var, lev, dom in domains:
            est = weighted_mean(values, ds, dom, label=f"{dlabel}|{var}={lev}")
            recs.append({"outcome": label, "design": dlabel, "group": var, "level": lev,
                         "mean": est.mean, "se": est.se, "deff": est.deff, "n": est.n})
    return pd.DataFrame(recs)


def table2_layout(long: pd.DataFrame, final: str | None = None) -> pd.DataFrame:
    """Wide layout: one line per subgroup level, mean/se per design, deff for the final design."""
    labels = list(dict.fromkeys(long["design"]))
    final = final or labels[-1]
    keys = list(dict.fromkeys(zip(long["outcome"], long["group"], long["level"])))
    recs = []
    for outcome, grp, lev in keys:
        sub = long[(long["outcome"] == outcome) & (long["group"] == grp) & (long["level"] == lev)]
        rec = {"outcome": outcome, "group": grp, "level": lev}
        for lab in labels:
            row = sub[sub["design"] == lab].iloc[0]
            rec[f"{lab}_mean"] = row["mean"]
            rec[f"{lab}_se"] = row["se"]
        rec["deff"] = sub[sub["design"] == final].iloc[0]["deff"]
        recs.append(rec)
    return pd.DataFrame(recs)
