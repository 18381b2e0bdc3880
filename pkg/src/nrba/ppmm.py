"""Proxy pattern-mixture sensitivity analysis for a continuous outcome.

A proxy ``x`` (the best prediction of the outcome from variables observed
for everyone) is paired with the outcome ``y`` (observed for respondents
only). Under the proxy pattern-mixture model the probability of response
depends on ``V = (1 - phi) * sqrt(s_yy/s_xx) * x + phi * y``; ``phi = 0`` is
missing at random and ``phi = 1`` makes response depend on ``y`` alone.

The maximum-likelihood mean of ``y`` and its large-sample variance are
closed form. Internally the sensitivity parameter is carried as
``lam = phi / (1 - phi)`` with ``phi = 1`` handled by its own branch.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .errors import (
    DegenerateProxyError,
    InsufficientDataError,
    SignFlipWarning,
    SmallGroupWarning,
)
from .glm import predict

RHO_WEAK = 0.4
RHO_STRONG = 0.7
D_SMALL = 0.1
D_LARGE = 0.3
DEFAULT_PHIS = (0.0, 0.5, 1.0)


@dataclass
class ProxySeries:
    x: np.ndarray
    y: np.ndarray
    respondent: np.ndarray
    rho_hat: float
    sign_flipped: bool = False

    @property
    def n(self) -> int:
        return self.x.size

    @property
    def r(self) -> int:
        return int(self.respondent.sum())

    @classmethod
    def from_arrays(cls, x, y, respondent=None, orient: bool = True) -> "ProxySeries":
        """Pair a proxy with an outcome.

        ``respondent`` defaults to the rows where ``y`` is not NaN. With
        ``orient`` the proxy is negated when its respondent correlation with
        ``y`` is negative.
        """
        x = np.asarray(x, dtype=float).copy()
        y = np.asarray(y, dtype=float).copy()
        if x.shape != y.shape or x.ndim != 1:
            raise ValueError("x and y must be 1-d arrays of the same length")
        if np.isnan(x).any():
            raise InsufficientDataError("proxy must be observed for every eligible unit")
        resp = ~np.isnan(y) if respondent is None else np.asarray(respondent, dtype=bool)
        if np.isnan(y[resp]).any():
            raise InsufficientDataError("outcome missing for a unit flagged as respondent")
        y[~resp] = np.nan
        if resp.sum() < 3:
            raise InsufficientDataError(f"need at least 3 respondents, got {int(resp.sum())}")
        xr, yr = x[resp], y[resp]
        if np.ptp(xr) == 0 or np.ptp(yr) == 0:
            raise DegenerateProxyError("respondent proxy or outcome has zero variance")
        rho = float(np.corrcoef(xr, yr)[0, 1])
        flipped = False
        if orient and rho < 0:
            x = -x
            rho = -rho
            flipped = True
        return cls(x=x, y=y, respondent=resp, rho_hat=rho, sign_flipped=flipped)

    def subset(self, rows) -> "ProxySeries":
        rows = np.asarray(rows, dtype=bool)
        x = self.x[rows]
        if self.sign_flipped:
            x = -x
        return ProxySeries.from_arrays(x, self.y[rows], self.respondent[rows])


def build_proxy(outcome_fit, data, outcome: str | None = None, respondent=None) -> ProxySeries:
    """Predict the outcome for every eligible row and pair it with the observed outcome.

    A negative respondent correlation is handled by negating the proxy, with
    a :class:`SignFlipWarning`.
    """
    frame = data.frame() if hasattr(data, "frame") else data
    outcome = outcome or outcome_fit.response
    x = predict(outcome_fit, frame, scale="linear")
    y = frame[outcome].to_numpy(dtype=float)
    proxy = ProxySeries.from_arrays(x, y, respondent)
    if proxy.sign_flipped:
        warnings.warn(f"proxy for {outcome!r} negatively correlated; sign flipped", SignFlipWarning)
    return proxy


def phi_to_lambda(phi: float) -> float:
    if not 0.0 <= phi <= 1.0:
        raise ValueError(f"phi must lie in [0, 1], got {phi}")
    return math.inf if phi == 1.0 else phi / (1.0 - phi)


def g_coefficient(rho: float, phi: float) -> float:
    """Unitless proxy multiplier ``(phi + (1-phi) rho) / (phi rho + (1-phi))``.

    Equals ``rho`` at phi = 0, 1 at phi = 0.5 and ``1/rho`` at phi = 1.
    """
    if not rho > 0:
        raise ValueError(f"rho must be positive (orient the proxy first), got {rho}")
    if not 0.0 <= phi <= 1.0:
        raise ValueError(f"phi must lie in [0, 1], got {phi}")
    return (phi + (1.0 - phi) * rho) / (phi * rho + (1.0 - phi))


@dataclass
class PpmmEstimate:
    phi: float
    lam: float
    g: float
    g_slope: float
    g_var: float
    muY: float
    muYvar: float
    muX: float
    sigmaXX: float
    sigmaYY: float
    sigmaXY: float
    nrba: float
    rho_hat: float
    ybar_r: float
    n: int
    r: int

    @property
    def se(self) -> float:
        return math.sqrt(self.muYvar)


def _moments(proxy: ProxySeries):
    x, y, resp = proxy.x, proxy.y, proxy.respondent
    n, r = x.size, int(resp.sum())
    x0, y0 = x[resp], y[resp]
    xbar0, ybar0 = x0.mean(), y0.mean()
    sxx0 = np.sum((x0 - xbar0) ** 2) / r
    syy0 = np.sum((y0 - ybar0) ** 2) / r
    sxy0 = np.sum((x0 - xbar0) * (y0 - ybar0)) / r
    if n > r:
        x1 = x[~resp]
        xbar1 = x1.mean()
        sxx1 = np.sum((x1 - xbar1) ** 2) / (n - r)
    else:
        xbar1, sxx1 = xbar0, 0.0
    return n, r, xbar0, ybar0, sxx0, syy0, sxy0, xbar1, sxx1


def _g_slope_and_var(lam, r, sxx0, syy0, sxy0):
    rho0 = sxy0 / math.sqrt(sxx0 * syy0)
    if math.isinf(lam):
        g = syy0 / sxy0  # inverse of the regression slope of x on y
        num = (sxx0 * syy0 - sxy0 ** 2) * syy0 ** 2
        var = num / (r * sxy0 ** 4)
    else:
        g = math.sqrt(syy0 / sxx0) * (lam + rho0) / (lam * rho0 + 1.0)
        root = math.sqrt(sxx0 * syy0)
        a = sxx0 ** 2 * syy0 ** 2 * (1 - lam ** 2 + lam ** 4)
        b = 2 * sxx0 * syy0 * sxy0 * lam * (3 * lam * sxy0 + root * (1 + lam ** 2))
        c = lam * sxy0 ** 3 * (lam * sxy0 + 2 * root * (1 + lam ** 2))
        num = (sxx0 * syy0 - sxy0 ** 2) * (a + b + c)
        var = num / (r * sxx0 ** 2 * (root + lam * sxy0) ** 4)
    return g, var


def ppmm_mle(proxy: ProxySeries, phi: float) -> PpmmEstimate:
    """Maximum-likelihood mean of the outcome under the proxy pattern-mixture model.

    Respondent moments use divisor r, nonrespondent proxy moments divisor
    n - r. With no nonrespondents the estimate is the respondent mean.
    """
    lam = phi_to_lambda(phi)
    n, r, xbar0, ybar0, sxx0, syy0, sxy0, xbar1, sxx1 = _moments(proxy)
    if r < 3:
        raise InsufficientDataError(f"need at least 3 respondents, got {r}")
    if sxx0 <= 0 or syy0 <= 0:
        raise DegenerateProxyError("zero respondent variance in proxy or outcome")
    if sxy0 <= 0:
        raise DegenerateProxyError("proxy must be positively correlated with the outcome")
    g, g_var = _g_slope_and_var(lam, r, sxx0, syy0, sxy0)

    muX = proxy.x.mean()
    sigmaXX = (r / n) * sxx0 + ((n - r) / n) * sxx1 + (r / n) * ((n - r) / n) * (xbar0 - xbar1) ** 2
    muY = ybar0 + g * (muX - xbar0)
    sigmaYY = syy0 + g ** 2 * (sigmaXX - sxx0)
    sigmaXY = sxy0 + g * (sigmaXX - sxx0)

    one = sigmaYY / n
    two = g_var * (muX - xbar0) ** 2
    three = ((n - r) / (r * n)) * (syy0 - 2 * g * sxy0 + g ** 2 * sxx0)
    rho0 = sxy0 / math.sqrt(sxx0 * syy0)
    return PpmmEstimate(
        phi=float(phi),
        lam=lam,
        g=g_coefficient(rho0, phi),
        g_slope=float(g),
        g_var=float(g_var),
        muY=float(muY),
        muYvar=float(one + two + three),
        muX=float(muX),
        sigmaXX=float(sigmaXX),
        sigmaYY=float(sigmaYY),
        sigmaXY=float(sigmaXY),
        nrba=float(muY - ybar0),
        rho_hat=float(rho0),
        ybar_r=float(ybar0),
        n=n,
        r=r,
    )


def nrba_index(proxy: ProxySeries, phi: float) -> float:
    """``g(rho, phi) * sqrt(s_yy/s_xx) * (xbar - xbar_R)``: the shift of the mean away from ybar_R."""
    resp = proxy.respondent
    if resp.sum() < 3:
        raise InsufficientDataError("need at least 3 respondents")
    xr, yr = proxy.x[resp], proxy.y[resp]
    sxx, syy = xr.var(), yr.var()
    if sxx <= 0 or syy <= 0:
        raise DegenerateProxyError("zero respondent variance in proxy or outcome")
    rho = float(np.corrcoef(xr, yr)[0, 1])
    return g_coefficient(rho, phi) * math.sqrt(syy / sxx) * (proxy.x.mean() - xr.mean())


def standardized_deviation(proxy: ProxySeries) -> float:
    """Difference between the all-unit and respondent proxy means, in respondent proxy sd units."""
    xr = proxy.x[proxy.respondent]
    sd = xr.std(ddof=1)
    if not sd > 0:
        raise DegenerateProxyError("respondent proxy has zero standard deviation")
    return float((proxy.x.mean() - xr.mean()) / sd)


@dataclass(frozen=True)
class StrengthVerdict:
    rho: float
    rho_class: str
    d: float
    d_class: str


def classify_strength(rho: float, d: float) -> StrengthVerdict:
    if rho < RHO_WEAK:
        rc = "weak"
    elif rho <= RHO_STRONG:
        rc = "moderate"
    else:
        rc = "strong"
    ad = abs(d)
    if ad < D_SMALL:
        dc = "small"
    elif ad <= D_LARGE:
        dc = "medium"
    else:
        dc = "large"
    return StrengthVerdict(rho=float(rho), rho_class=rc, d=float(d), d_class=dc)


def _group_keys(groups):
    g = pd.Series(np.asarray(groups, dtype=object))
    keys = sorted({k for k in g if k is not None and not (isinstance(k, float) and math.isnan(k))},
                  key=str)
    return g.to_numpy(), keys


def subgroup_proxies(proxy: ProxySeries, groups) -> tuple:
    """Per-group proxy series, recomputing correlation and variances within each group.

    Returns ``(proxies, skipped)``; groups with fewer than three respondents
    or a degenerate proxy are skipped and listed.
    """
    g, keys = _group_keys(groups)
    out, skipped = {}, []
    for k in keys:
        rows = g == k
        try:
            out[k] = proxy.subset(rows)
        except (InsufficientDataError, DegenerateProxyError) as exc:
            skipped.append((k, str(exc)))
    if skipped:
        warnings.warn(f"subgroups skipped: {[k for k, _ in skipped]}", SmallGroupWarning)
    return out, skipped


def subgroup_nrba(proxy: ProxySeries, groups, phi: float) -> dict:
    """Run :func:`ppmm_mle` independently within each group."""
    proxies, _ = subgroup_proxies(proxy, groups)
    return {k: ppmm_mle(p, phi) for k, p in proxies.items()}


@dataclass
class SensitivityTable:
    rows: pd.DataFrame
    overlap: dict

    def wide(self) -> pd.DataFrame:
        """One line per group with rho, d, ybar_R, and mean/se at each phi."""
        recs = []
        for grp, sub in self.rows.groupby("group", sort=False):
            rec = {
                "group": grp,
                "rho_hat": sub["rho_hat"].iloc[0],
                "d": sub["d"].iloc[0],
                "ybar_r": sub["ybar_r"].iloc[0],
                "n": sub["n"].iloc[0],
                "r": sub["r"].iloc[0],
            }
            for _, row in sub.iterrows():
                rec[f"mu_phi={row['phi']:g}"] = row["muY"]
                rec[f"se_phi={row['phi']:g}"] = row["se"]
            rec["overlap"] = self.overlap[grp]
            recs.append(rec)
        return pd.DataFrame(recs)


def _sweep_one(label, proxy, phis):
    d = standardized_deviation(proxy)
    recs = []
    for phi in phis:
        est = ppmm_mle(proxy, phi)
        recs.append({
            "group": label,
            "phi": float(phi),
            "muY": est.muY,
            "se": est.se,
            "nrba": est.nrba,
            "rho_hat": est.rho_hat,
            "d": d,
            "ybar_r": est.ybar_r,
            "n": est.n,
            "r": est.r,
            "sign_flipped": proxy.sign_flipped,
        })
    lo = max(r["muY"] - 1.96 * r["se"] for r in recs)
    hi = min(r["muY"] + 1.96 * r["se"] for r in recs)
    return recs, bool(lo <= hi)


def sensitivity_sweep(proxy: ProxySeries, phis=DEFAULT_PHIS, groups=None) -> SensitivityTable:
    """Estimates and standard errors at each phi, overall and optionally per group.

    ``overlap`` records, per group, whether all 95% intervals share a common
    point (pairwise intersection of intervals on a line).
    """
    phis = [float(p) for p in phis]
    for p in phis:
        phi_to_lambda(p)
    recs, overlap = _sweep_one("overall", proxy, phis)
    all_recs, overlaps = list(recs), {"overall": overlap}
    if groups is not None:
        proxies, _ = subgroup_proxies(proxy, groups)
        for k, p in proxies.items():
            recs, ov = _sweep_one(k, p, phis)
            all_recs.extend(recs)
            overlaps[k] = ov
    return SensitivityTable(rows=pd.DataFrame(all_recs), overlap=overlaps)
