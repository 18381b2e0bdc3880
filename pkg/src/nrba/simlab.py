"""Synthetic populations, missingness mechanisms, and Monte Carlo harnesses.

Random streams: a harness run takes one master seed, and replicate ``i`` of
cell ``c`` draws from ``numpy.random.default_rng([seed, c, i])``. Each
replicate's stream therefore depends only on its coordinates, and serial
and parallel runs agree.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import pandas as pd
from scipy.optimize import brentq
from scipy.special import expit

from .errors import InsufficientDataError, UnstableSimulationWarning, VacuousBiasWarning
from .glm import _irls
from .ppmm import ProxySeries, ppmm_mle
from .propensity import ipw_weights

RHO_GUARD = 1e-6
STRENGTH = {"L": 0.1, "H": 1.0}
CELLS = ("LLL", "LLH", "LHL", "LHH", "HLL", "HLH", "HHL", "HHH")
METHODS = ("CC", "IPW", "MI")

# Directions relative to complete-case analysis: (IPW bias, MI bias, IPW var, MI var).
EXPECTED_DIRECTIONS = {
    "LLL": ("same", "same", "same", "same"),
    "LLH": ("same", "same", "same", "lower"),
    "LHL": ("same", "same", "lower", "lower"),
    "LHH": ("same", "same", "lower", "much lower"),
    "HLL": ("same", "same", "higher", "same"),
    "HLH": ("same", "same", "higher", "lower"),
    "HHL": ("lower", "lower", "lower", "lower"),
    "HHH": ("lower", "lower", "lower", "much lower"),
}


@dataclass(frozen=True)
class PopulationSpec:
    N: int
    mu_x: float = 0.0
    mu_y: float = 0.0
    var_x: float = 1.0
    var_y: float = 1.0
    rho: float = 0.5

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be positive")
        if not (self.var_x > 0 and self.var_y > 0):
            raise ValueError("variances must be positive")
        if not abs(self.rho) < 1 - RHO_GUARD:
            raise ValueError(f"|rho| must be below {1 - RHO_GUARD} (degenerate covariance)")

    @property
    def cov(self) -> np.ndarray:
        c = self.rho * math.sqrt(self.var_x * self.var_y)
        return np.array([[self.var_x, c], [c, self.var_y]])


@dataclass
class Population:
    x: np.ndarray
    y: np.ndarray
    spec: PopulationSpec

    @property
    def N(self) -> int:
        return self.x.size


def gen_population(spec: PopulationSpec, seed) -> Population:
    """Bivariate-normal (x, y) population of size ``spec.N``."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    z1 = rng.standard_normal(spec.N)
    z2 = rng.standard_normal(spec.N)
    x = spec.mu_x + math.sqrt(spec.var_x) * z1
    y = spec.mu_y + math.sqrt(spec.var_y) * (spec.rho * z1 + math.sqrt(1 - spec.rho ** 2) * z2)
    return Population(x=x, y=y, spec=spec)


@dataclass(frozen=True)
class MechanismSpec:
    """Logistic response mechanism ``P(R=1) = expit(psi0 + psi1 * index)``.

    The index is 0 for MCAR, the centred ``x`` for MAR, and for MNAR the
    centred ``V = (1 - phi) sqrt(var_y/var_x) x + phi y``.
    """

    kind: str
    psi0: float = 0.0
    psi1: float = 0.0
    phi: float = 0.0
    link: str = "logit"

    def __post_init__(self):
        if self.kind not in ("MCAR", "MAR", "MNAR"):
            raise ValueError(f"unknown mechanism {self.kind!r}")
        if self.link != "logit":
            raise ValueError("only the logit link is supported")
        if not 0.0 <= self.phi <= 1.0:
            raise ValueError("phi must lie in [0, 1]")
        if self.kind == "MCAR" and self.psi1 != 0:
            raise ValueError("MCAR mechanisms take an intercept only")
        if self.kind == "MAR" and self.phi != 0:
            raise ValueError("MAR mechanisms have phi = 0")


def selection_index(pop: Population, mech: MechanismSpec) -> np.ndarray:
    s = pop.spec
    if mech.kind == "MCAR":
        return np.zeros(pop.N)
    xc = pop.x - s.mu_x
    if mech.kind == "MAR":
        return xc
    yc = pop.y - s.mu_y
    return (1 - mech.phi) * math.sqrt(s.var_y / s.var_x) * xc + mech.phi * yc


def response_probability(pop: Population, mech: MechanismSpec) -> np.ndarray:
    return expit(mech.psi0 + mech.psi1 * selection_index(pop, mech))


def apply_mechanism(pop: Population, mech: MechanismSpec, seed) -> np.ndarray:
    """Independent Bernoulli response indicators (True = responds)."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return rng.random(pop.N) < response_probability(pop, mech)


class TrueBias(NamedTuple):
    value: float
    vacuous: bool


def true_bias(y, responded) -> TrueBias:
    """Nonresponse bias of the respondent mean, ``(N - N_R)/N * (Ybar_R - Ybar_NR)``.

    When everyone or no one responds the bias is reported as 0 with the
    ``vacuous`` flag set.
    """
    y = np.asarray(y, dtype=float)
    r = np.asarray(responded, dtype=bool)
    N, NR = y.size, int(r.sum())
    if NR == 0 or NR == N:
        warnings.warn("true_bias: no respondents or no nonrespondents", VacuousBiasWarning)
        return TrueBias(0.0, True)
    return TrueBias(float((N - NR) / N * (y[r].mean() - y[~r].mean())), False)


def mi_impute(X, y, m: int, seed, draw_parameters: bool = True) -> list:
    """Impute missing ``y`` from a normal linear model fit on the respondents.

    ``X`` is the full design matrix (include an intercept column). With
    ``draw_parameters`` each imputation first draws ``sigma^2`` from its
    scaled inverse chi-square posterior and the coefficients from their
    normal posterior given ``sigma^2``; otherwise the least-squares values
    are used. Missing values are then drawn as prediction plus normal noise.
    """
    if m < 2:
        raise ValueError("need m >= 2 imputations")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    obs = ~np.isnan(y)
    Xo, yo, Xm = X[obs], y[obs], X[~obs]
    r, k = Xo.shape
    if r <= k:
        raise InsufficientDataError(f"{r} respondents for {k} imputation-model columns")
    xtx_inv = np.linalg.inv(Xo.T @ Xo)
    beta = xtx_inv @ Xo.T @ yo
    resid = yo - Xo @ beta
    df = r - k
    s2 = float(resid @ resid) / df
    if s2 <= 1e-26 * max(float(yo @ yo) / r, 1.0):
        s2 = 0.0  # rounding residue of an exact fit
    if draw_parameters and not s2 > 0:
        raise InsufficientDataError("degenerate residual variance in imputation model")
    chol = np.linalg.cholesky(xtx_inv) if draw_parameters else None
    out = []
    for _ in range(m):
        if draw_parameters:
            sigma2 = s2 * df / rng.chisquare(df)
            b = beta + math.sqrt(sigma2) * chol @ rng.standard_normal(k)
        else:
            sigma2, b = s2, beta
        filled = y.copy()
        filled[~obs] = Xm @ b + math.sqrt(sigma2) * rng.standard_normal(Xm.shape[0])
        out.append(filled)
    return out


class RubinResult(NamedTuple):
    estimate: float
    total: float
    within: float
    between: float
    m: int


def rubin_combine(estimates, variances) -> RubinResult:
    """Pool m completed-data estimates: total variance ``W + (1 + 1/m) B``."""
    q = np.asarray(estimates, dtype=float)
    u = np.asarray(variances, dtype=float)
    m = q.size
    if m < 2 or u.size != m:
        raise ValueError("need m >= 2 estimates with matching variances")
    W = float(u.mean())
    B = float(q.var(ddof=1))
    return RubinResult(float(q.mean()), W + (1 + 1 / m) * B, W, B, m)


@dataclass
class CellResult:
    method: str
    bias: float
    variance: float
    mcse: float
    reps: int
    estimates: np.ndarray = field(default=None, repr=False)


def _summarize(method, est, truth):
    est = np.asarray(est, dtype=float)
    reps = est.size
    sd = est.std(ddof=1) if reps > 1 else 0.0
    return CellResult(method=method, bias=float(est.mean() - truth), variance=float(sd ** 2),
                      mcse=float(sd / math.sqrt(reps)) if reps > 1 else 0.0, reps=reps,
                      estimates=est)


def variance_contrast(a, b):
    """``var(a) - var(b)`` over paired replicates with its Monte Carlo standard error."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ca, cb = (a - a.mean()) ** 2, (b - b.mean()) ** 2
    diff = ca - cb
    n = a.size
    return float(diff.sum() / (n - 1)), float(diff.std(ddof=1) / math.sqrt(n))


def abs_bias_contrast(a, b, truth: float = 0.0):
    """``|bias(a)| - |bias(b)|`` over paired replicates with its Monte Carlo standard error."""
    a = np.asarray(a, dtype=float) - truth
    b = np.asarray(b, dtype=float) - truth
    sa, sb = np.sign(a.mean()) or 1.0, np.sign(b.mean()) or 1.0
    diff = sa * a - sb * b
    return float(diff.mean()), float(diff.std(ddof=1) / math.sqrt(a.size))


@dataclass(frozen=True)
class CellSpec:
    """One configuration of the strength grid.

    ``code`` is three letters from {L, H}: association of the propensity
    driver with response, of the propensity driver with the outcome, and of
    the other covariate with the outcome.
    """

    code: str
    response_rate: float = 0.6
    low: float = STRENGTH["L"]
    high: float = STRENGTH["H"]

    def __post_init__(self):
        if len(self.code) != 3 or set(self.code) - {"L", "H"}:
            raise ValueError(f"cell code must be three of L/H, got {self.code!r}")

    def _s(self, c):
        return self.high if c == "H" else self.low

    @property
    def a(self) -> float:
        return self._s(self.code[0])

    @property
    def b(self) -> float:
        return self._s(self.code[1])

    @property
    def c(self) -> float:
        return self._s(self.code[2])

    @property
    def psi0(self) -> float:
        return tuned_intercept(self.a, self.response_rate)


_GH_X, _GH_W = np.polynomial.hermite_e.hermegauss(80)


def tuned_intercept(slope: float, rate: float) -> float:
    """Intercept giving ``E[expit(psi0 + slope * Z)] = rate`` for standard normal Z."""
    w = _GH_W / _GH_W.sum()

    def f(psi0):
        return float(w @ expit(psi0 + slope * _GH_X)) - rate

    return brentq(f, -20, 20, xtol=1e-14)


def _one_replicate(cell: CellSpec, psi0: float, n: int, m: int, rng):
    z1 = rng.standard_normal(n)
    z2 = rng.standard_normal(n)
    y = cell.b * z1 + cell.c * z2 + rng.standard_normal(n)
    r = rng.random(n) < expit(psi0 + cell.a * z1)
    X = np.column_stack([np.ones(n), z1, z2])
    cc = y[r].mean()
    _, eta, _, _, _ = _irls(X, r.astype(float))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        w = ipw_weights(expit(eta[r]))
    ipw = float(w @ y[r] / w.sum())
    ymiss = np.where(r, y, np.nan)
    comp = mi_impute(X, ymiss, m, rng)
    q = [c.mean() for c in comp]
    u = [c.var(ddof=1) / n for c in comp]
    mi = rubin_combine(q, u).estimate
    return cc, ipw, mi


def run_cell(cell, reps: int = 500, n: int = 1000, seed: int = 0, m: int = 20) -> dict:
    """Monte Carlo bias and variance of CC, IPW and MI means for one grid cell.

    The covariates are independent standard normals: ``z1`` drives response
    (slope ``a``) and enters the outcome with slope ``b``; ``z2`` enters the
    outcome only (slope ``c``). The population mean of the outcome is 0.
    IPW fits a logistic model of response on ``(z1, z2)``; MI imputes from a
    linear model on ``(z1, z2)`` and pools with Rubin's rules.
    """
    cell = cell if isinstance(cell, CellSpec) else CellSpec(cell)
    if reps < 50:
        warnings.warn(f"{reps} replicates is too few for stable Monte Carlo summaries",
                      UnstableSimulationWarning)
    idx = CELLS.index(cell.code)
    psi0 = cell.psi0
    est = np.empty((reps, 3))
    for i in range(reps):
        est[i] = _one_replicate(cell, psi0, n, m, np.random.default_rng([seed, idx, i]))
    return {meth: _summarize(meth, est[:, j], 0.0) for j, meth in enumerate(METHODS)}


def run_grid(reps: int = 500, n: int = 1000, seed: int = 0, m: int = 20, cells=CELLS,
             response_rate: float = 0.6, low: float = STRENGTH["L"], high: float = STRENGTH["H"]):
    """Run every cell; returns ``(table, results)`` where ``table`` has one line per cell."""
    results, recs = {}, []
    for code in cells:
        res = run_cell(CellSpec(code, response_rate, low, high), reps, n, seed, m)
        results[code] = res
        cc = res["CC"]
        rec = {"cell": code, "reps": reps, "n": n}
        for meth in METHODS:
            r = res[meth]
            rec[f"bias_{meth}"] = r.bias
            rec[f"var_{meth}"] = r.variance
            rec[f"mcse_{meth}"] = r.mcse
        for meth in ("IPW", "MI"):
            r = res[meth]
            rec[f"bias_ratio_{meth}"] = abs(r.bias) / abs(cc.bias) if cc.bias else np.nan
            rec[f"var_ratio_{meth}"] = r.variance / cc.variance
            dv, dv_se = variance_contrast(r.estimates, cc.estimates)
            db, db_se = abs_bias_contrast(r.estimates, cc.estimates)
            rec[f"var_diff_{meth}"], rec[f"var_diff_mcse_{meth}"] = dv, dv_se
            rec[f"absbias_diff_{meth}"], rec[f"absbias_diff_mcse_{meth}"] = db, db_se
        ipw_b, mi_b, ipw_v, mi_v = EXPECTED_DIRECTIONS[code]
        rec.update(expected_ipw_bias=ipw_b, expected_mi_bias=mi_b, expected_ipw_var=ipw_v, expected_mi_var=mi_v)
        recs.append(rec)
    return pd.DataFrame(recs), results


def ppmm_recovery(phi_star: float, phis=(0.0, 0.5, 1.0), reps: int = 200, N: int = 10_000,
                  seed: int = 0, rho: float = 0.6, psi1: float = STRENGTH["H"],
                  response_rate: float = 0.6) -> dict:
    """Simulate MNAR nonresponse at ``phi_star`` and estimate the mean with the PPMM at each phi.

    Each replicate draws a bivariate-normal population, applies the MNAR
    mechanism, and uses ``x`` itself as the proxy. Errors are measured
    against the realized population mean. Also returns the largest
    discrepancy between the bias identity and ``ybar_R - Ybar`` seen.
    """
    spec = PopulationSpec(N=N, rho=rho)
    var_v = (1 - phi_star) ** 2 + phi_star ** 2 + 2 * phi_star * (1 - phi_star) * rho
    mech = MechanismSpec("MNAR", psi0=tuned_intercept(psi1 * math.sqrt(var_v), response_rate),
                         psi1=psi1, phi=phi_star)
    err = np.empty((reps, len(phis)))
    identity_gap = 0.0
    tag = int(round(phi_star * 1000))
    for i in range(reps):
        rng = np.random.default_rng([seed, tag, i])
        pop = gen_population(spec, rng)
        r = apply_mechanism(pop, mech, rng)
        tb = true_bias(pop.y, r)
        identity_gap = max(identity_gap, abs(tb.value - (pop.y[r].mean() - pop.y.mean())))
        proxy = ProxySeries.from_arrays(pop.x, np.where(r, pop.y, np.nan))
        ybar = pop.y.mean()
        for j, phi in enumerate(phis):
            err[i, j] = ppmm_mle(proxy, phi).muY - ybar
    out = {"phi_star": phi_star, "identity_gap": identity_gap, "errors": err, "phis": tuple(phis)}
    out["bias"] = err.mean(axis=0)
    out["mcse"] = err.std(axis=0, ddof=1) / math.sqrt(reps)
    return out


def ecls_like_dataset(seed: int = 20110901, n_psu: int = 100, per_psu: int = 50) -> pd.DataFrame:
    """Synthetic stand-in for a kindergarten cohort survey file.

    100 PSUs (one school each) in 25 strata, 50 children per school, so
    n = 5,000 by default. Fifteen frame auxiliaries, two late-arriving
    auxiliaries (``ses``, ``home_language``; observed for respondents and
    for about a quarter of nonrespondents), child response near 87%, three
    child outcomes plus a parent and a teacher instrument. Item
    nonresponse in ``reading`` is coded partly as blank and partly as -9.
    """
    rng = np.random.default_rng(seed)
    n = n_psu * per_psu
    school = np.repeat(np.arange(n_psu), per_psu)
    stratum = np.repeat(np.arange(n_psu) // 4, per_psu)

    s_type = np.where(rng.random(n_psu) < 0.8, "public", "private")
    s_region = rng.choice(["northeast", "midwest", "south", "west"], n_psu, p=[0.17, 0.22, 0.38, 0.23])
    s_locale = rng.choice(["city", "suburb", "town", "rural"], n_psu, p=[0.3, 0.35, 0.12, 0.23])
    s_students = np.round(np.exp(rng.normal(6.1, 0.45, n_psu)))
    s_fte = np.round(s_students / rng.uniform(12, 20, n_psu), 1)
    s_low = np.where(rng.random(n_psu) < 0.35, "PK", "KG")
    s_high = rng.choice(["5", "6", "8"], n_psu, p=[0.55, 0.25, 0.2])
    s_pct_kg = np.round(rng.uniform(8, 25, n_psu), 1)
    mix = rng.dirichlet([6, 1.2, 2.0, 0.6], n_psu) * 100
    s_pct_black, s_pct_hisp, s_pct_asian = mix[:, 1], mix[:, 2], mix[:, 3]
    s_effect = rng.normal(0, 3.0, n_psu)

    race = np.empty(n, dtype=object)
    for s in range(n_psu):
        p = np.array([mix[s, 0], mix[s, 1], mix[s, 2], mix[s, 3], 4.0])
        race[school == s] = rng.choice(["white", "black", "hispanic", "api", "other"],
                                       per_psu, p=p / p.sum())
    sex = np.where(rng.random(n) < 0.49, "female", "male")
    birth_year = np.where(rng.random(n) < 0.3, "2004", "2005")
    race_eff = {"white": 1.5, "black": -1.5, "hispanic": -3.0, "api": 3.5, "other": 1.0}
    re = np.array([race_eff[v] for v in race])
    ses = rng.normal(0, 1, n) + 0.3 * (re / 3) + 0.2 * (s_type[school] == "private")
    lang = np.where(rng.random(n) < 0.15 + 0.4 * (race == "hispanic"), "non-english", "english")

    private = (s_type[school] == "private").astype(float)
    older = (birth_year == "2004").astype(float)
    reading = (54 + 0.6 * re + 2.0 * private + 1.2 * older - 0.8 * (sex == "male")
               + 2.5 * ses - 1.0 * (lang == "non-english") + s_effect[school]
               + 0.02 * (s_pct_asian[school] - 5) + rng.normal(0, 7.5, n))
    math_ = (35.5 + 0.5 * re + 1.5 * private + 1.5 * older + 2.2 * ses
             + 0.8 * s_effect[school] + rng.normal(0, 7.0, n))
    bmi = 16.5 + 0.15 * re - 0.3 * ses + 0.3 * (sex == "male") + rng.normal(0, 2.0, n)
    impulsive = 2.0 - 0.1 * ses + 0.15 * (sex == "male") + rng.normal(0, 0.6, n)
    externalizing = 1.6 - 0.05 * ses + 0.2 * (sex == "male") + rng.normal(0, 0.5, n)

    region_eff = {"northeast": -0.2, "midwest": 0.3, "south": 0.1, "west": -0.3}
    locale_eff = {"city": -0.4, "suburb": 0.0, "town": 0.2, "rural": 0.3}
    eta = (2.05 + np.array([region_eff[v] for v in s_region[school]])
           + np.array([locale_eff[v] for v in s_locale[school]])
           - 0.25 * (race == "hispanic") - 0.3 * (race == "black") + 0.25 * private
           - 0.008 * (s_pct_black[school] - 15) + 0.04 * (reading - 54) / 7.5)
    responded = rng.random(n) < expit(eta)
    parent = responded & (rng.random(n) < 0.85) | (~responded & (rng.random(n) < 0.1))
    teacher = responded & (rng.random(n) < 0.93)

    sel_prob = np.clip(0.002 * (1 + 2.0 * (race == "api")) * (1 + 0.3 * rng.random(n)), 1e-4, 1)
    base_weight = np.round(1 / sel_prob, 2)

    df = pd.DataFrame({
        "child_id": np.arange(1, n + 1),
        "stratum": stratum + 1,
        "psu": school + 1,
        "base_weight": base_weight,
        "responded": responded.astype(int),
        "reading": np.round(reading, 2),
        "math": np.round(math_, 2),
        "bmi": np.round(bmi, 2),
        "impulsive": np.round(impulsive, 3),
        "externalizing": np.round(externalizing, 3),
        "sex": sex,
        "birth_year": birth_year,
        "race": race,
        "school_type": s_type[school],
        "region": s_region[school],
        "locale": s_locale[school],
        "n_students": s_students[school],
        "fte": s_fte[school],
        "st_ratio": np.round(s_students[school] / s_fte[school], 2),
        "low_grade": s_low[school],
        "high_grade": s_high[school],
        "pct_kg": s_pct_kg[school],
        "pct_asian": np.round(s_pct_asian[school], 2),
        "pct_hisp": np.round(s_pct_hisp[school], 2),
        "pct_black": np.round(s_pct_black[school], 2),
        "ses": np.round(ses, 3),
        "home_language": lang,
    })
    for col in ("reading", "math", "bmi"):
        df.loc[~responded, col] = np.nan
    df.loc[~parent, "impulsive"] = np.nan
    df.loc[~teacher, "externalizing"] = np.nan
    late_seen = responded | (rng.random(n) < 0.28)
    df.loc[~late_seen, ["ses", "home_language"]] = np.nan
    resp_idx = np.flatnonzero(responded)
    item = rng.choice(resp_idx, size=int(0.012 * resp_idx.size), replace=False)
    df.loc[item[: item.size * 2 // 3], "reading"] = -9
    df.loc[item[item.size * 2 // 3:], "reading"] = np.nan
    math_item = rng.choice(resp_idx, size=int(0.005 * resp_idx.size), replace=False)
    df.loc[math_item, "math"] = np.nan
    return df
