"""Ten-step nonresponse bias analysis driven by one configuration file.

Each step writes its artifacts into the output directory before the next
step starts, so a failure leaves the earlier artifacts in place. Warnings
raised inside a step are collected with their machine-readable codes.
"""

from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
import yaml

from . import glm
from .dataset import ColumnSpec, RectDataset, cross_pattern_table, load_table, missingness_summary
from .errors import NrbaError, NrbaWarning, PipelineError, SchemaError
from .ppmm import (
    DEFAULT_PHIS,
    RHO_WEAK,
    build_proxy,
    classify_strength,
    sensitivity_sweep,
    standardized_deviation,
)
from .propensity import (
    fit_stage_propensity,
    propensity_histogram,
    quintile_strata,
    stratum_outcome_summary,
)
from .simlab import EXPECTED_DIRECTIONS
from .survey_est import SurveyDesign, comparison_table, rake, table2_layout, weighting_class_adjust

log = logging.getLogger(__name__)

AUC_HIGH = 0.7
EXTERNAL_CAVEAT = ("differences in the estimates could be due to other sources of heterogeneity "
                   "(timing, coverage, sample design), not only nonresponse")
ITEM_NOTE = ("units with an item-missing outcome are treated as nonrespondents for that outcome; "
             "multiple imputation of item nonresponse is not performed")


@dataclass
class NrbaConfig:
    input_path: Path
    columns: list
    outcomes: list
    auxiliaries: list = None
    late_auxiliaries: list = field(default_factory=list)
    interactions: list = field(default_factory=list)
    tree: dict = field(default_factory=lambda: {"enabled": True, "max_depth": 3, "min_node": 200})
    subgroups: list = field(default_factory=list)
    weight: str = None
    base_weight: str = None
    psu: str = None
    stratum: str = None
    response_indicator: str = None
    weighting_classes: list = field(default_factory=list)
    raking: list = field(default_factory=list)
    phis: list = field(default_factory=lambda: list(DEFAULT_PHIS))
    benchmarks: list = field(default_factory=list)
    instrument_groups: dict = field(default_factory=dict)
    output_dir: Path = Path("nrba_output")
    seed: int = 0
    delimiter: str = ","

    def __post_init__(self):
        if not self.outcomes:
            raise SchemaError("config needs at least one outcome")
        for p in self.phis:
            if not 0.0 <= float(p) <= 1.0:
                raise SchemaError(f"phi {p} outside [0, 1]")
        self.phis = [float(p) for p in self.phis]
        self.input_path = Path(self.input_path)
        self.output_dir = Path(self.output_dir)

    @classmethod
    def from_file(cls, path) -> "NrbaConfig":
        path = Path(path)
        raw = yaml.safe_load(path.read_text())
        return cls.from_dict(raw, base=path.parent)

    @classmethod
    def from_dict(cls, raw: dict, base=Path(".")) -> "NrbaConfig":
        base = Path(base)
        inp = raw["input"]
        design = raw.get("design", {}) or {}
        tree = {"enabled": True, "max_depth": 3, "min_node": 200}
        tree.update(raw.get("tree", {}) or {})
        in_path = Path(inp["path"])
        out = Path(raw.get("output_dir", "nrba_output"))
        return cls(
            input_path=in_path if in_path.is_absolute() else base / in_path,
            columns=[ColumnSpec.from_dict(c) for c in inp["columns"]],
            delimiter=inp.get("delimiter", ","),
            outcomes=list(raw["outcomes"]),
            auxiliaries=raw.get("auxiliaries"),
            late_auxiliaries=list(raw.get("late_auxiliaries", []) or []),
            interactions=list(raw.get("interactions", []) or []),
            tree=tree,
            subgroups=list(raw.get("subgroups", []) or []),
            weight=design.get("weight"),
            base_weight=design.get("base_weight"),
            psu=design.get("psu"),
            stratum=design.get("stratum"),
            response_indicator=raw.get("response_indicator"),
            weighting_classes=list(raw.get("weighting_classes", []) or []),
            raking=list(raw.get("raking", []) or []),
            phis=list(raw.get("phis", DEFAULT_PHIS)),
            benchmarks=list(raw.get("benchmarks", []) or []),
            instrument_groups=dict(raw.get("instrument_groups", {}) or {}),
            output_dir=out if out.is_absolute() else base / out,
            seed=int(raw.get("seed", 0)),
        )


@dataclass
class NrbaReport:
    output_dir: Path
    summary: dict
    artifacts: dict
    warnings: list

    def step(self, k: int) -> dict:
        return self.summary["steps"][f"step{k:02d}"]


def _num(v):
    if v is None:
        return None
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return None if math.isnan(v) else float(f"{v:.12g}")
    if isinstance(v, (np.bool_,)):
        return bool(v)
    return v


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return _num(obj)


class _Writer:
    def __init__(self, outdir: Path):
        self.outdir = outdir
        self.outdir.mkdir(parents=True, exist_ok=True)
        self.artifacts = {}

    def csv(self, step: int, name: str, df: pd.DataFrame) -> None:
        fname = f"step{step:02d}_{name}.csv"
        df.to_csv(self.outdir / fname, index=False, float_format="%.10g", lineterminator="\n")
        self.artifacts.setdefault(f"step{step:02d}", []).append(fname)

    def json(self, name: str, obj) -> None:
        text = json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"
        (self.outdir / name).write_text(text)


def external_comparison(estimates: dict, benchmarks: list) -> pd.DataFrame:
    """Compare survey estimates to external benchmarks.

    ``estimates`` maps a label to ``(mean, se)``; each benchmark is a mapping
    with ``label``, ``mean`` and ``se``. A difference larger than twice the
    combined standard error is flagged.
    """
    recs = []
    for b in benchmarks:
        label = b["label"]
        if label not in estimates:
            raise NrbaError(f"benchmark label {label!r} has no matching survey estimate")
        m, se = estimates[label]
        diff = m - float(b["mean"])
        cse = math.sqrt(se ** 2 + float(b["se"]) ** 2)
        recs.append({
            "label": label, "survey_mean": m, "survey_se": se,
            "benchmark_mean": float(b["mean"]), "benchmark_se": float(b["se"]),
            "source": b.get("source", ""), "difference": diff, "combined_se": cse,
            "flagged": bool(abs(diff) > 2 * cse), "caveat": EXTERNAL_CAVEAT,
        })
    cols = ["label", "survey_mean", "survey_se", "benchmark_mean", "benchmark_se", "source",
            "difference", "combined_se", "flagged", "caveat"]
    return pd.DataFrame(recs, columns=cols)


def item_missingness_audit(d: RectDataset, outcomes, response_indicator: str) -> pd.DataFrame:
    """Unit- and item-level missing counts for each outcome.

    Item-missing counts the unit respondents whose outcome is missing, so a
    sentinel-coded value and a blank are counted alike.
    """
    r = d.values[response_indicator].to_numpy() == 1
    recs = []
    for y in outcomes:
        obs = d.observed(y)
        recs.append({
            "outcome": y,
            "n_units": d.n,
            "unit_nonrespondents": int((~r).sum()),
            "unit_nonrespondents_observed": int((~r & obs).sum()),
            "item_missing": int((r & ~obs).sum()),
            "analysis_respondents": int(obs.sum()),
            "note": ITEM_NOTE,
        })
    return pd.DataFrame(recs)


def _table1_cell(auc_val, corr_py, other_corr):
    if auc_val is None:
        return None
    c1 = "H" if auc_val >= AUC_HIGH else "L"
    c2 = "H" if abs(corr_py) >= RHO_WEAK else "L"
    c3 = "H" if abs(other_corr) >= RHO_WEAK else "L"
    return c1 + c2 + c3


def _residual_corr(proxy_x, logit_p, y):
    """Correlation of y with the part of the proxy orthogonal to the logit propensity."""
    X = np.column_stack([np.ones_like(logit_p), logit_p])
    beta, *_ = np.linalg.lstsq(X, proxy_x, rcond=None)
    res = proxy_x - X @ beta
    if np.ptp(res) == 0 or np.ptp(y) == 0:
        return 0.0
    return float(np.corrcoef(res, y)[0, 1])


class _Run:
    def __init__(self, config: NrbaConfig):
        self.cfg = config
        self.w = _Writer(config.output_dir)
        self.summary = {"seed": config.seed, "phis": config.phis, "outcomes": config.outcomes,
                        "steps": {}}
        self.warnings = []

    def step(self, k, fn):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            try:
                result = fn()
            except NrbaError as exc:
                self._flush(k, caught)
                self.w.json("report.json", {**self.summary, "warnings": self.warnings,
                                            "failed_step": k, "error": str(exc)})
                raise PipelineError(k, exc) from exc
        self._flush(k, caught)
        self.summary["steps"][f"step{k:02d}"] = result
        log.info("step %d done", k)

    def _flush(self, k, caught):
        for c in caught:
            code = getattr(c.category, "code", "W_OTHER") if issubclass(c.category, NrbaWarning) \
                else "W_OTHER"
            self.warnings.append({"step": k, "code": code, "message": str(c.message)})

    # Step 1
    def patterns(self):
        cfg = self.cfg
        self.data = load_table(cfg.input_path, cfg.columns, cfg.delimiter)
        d = self.data
        self.ri = cfg.response_indicator or d.role_column("response-indicator")
        if self.ri is None:
            raise SchemaError("no response-indicator column configured")
        self.frame = d.frame()
        self.resp = self.frame[self.ri].to_numpy() == 1
        analysis_cols = [c.name for c in d.columns if c.role in ("outcome", "auxiliary", "subgroup")]
        pat = missingness_summary(d, analysis_cols)
        self.w.csv(1, "missing_rates", pat.rates_frame())
        self.w.csv(1, "patterns", pat.classes_frame())
        out = pat.to_dict()
        out["unit_response_rate"] = float(self.resp.mean())
        if cfg.instrument_groups:
            cross = cross_pattern_table(d, cfg.instrument_groups)
            self.w.csv(1, "cross_patterns", cross)
            out["cross_patterns"] = cross.to_dict(orient="records")
        return out

    # Step 2
    def key_variables(self):
        recs = []
        for y in self.cfg.outcomes:
            obs = self.data.observed(y)
            recs.append({"outcome": y, "n_observed": int(obs.sum()),
                         "observed_rate": float(obs.mean()),
                         "analyses": "mean; " + "; ".join(f"mean by {g}" for g in self.cfg.subgroups)})
        self.w.csv(2, "key_variables", pd.DataFrame(recs))
        return {"outcomes": self.cfg.outcomes, "subgroups": self.cfg.subgroups}

    def _aux(self):
        cfg = self.cfg
        aux = cfg.auxiliaries or [c.name for c in self.data.columns if c.role == "auxiliary"
                                  and c.name not in cfg.late_auxiliaries]
        for a in aux:
            if not self.data.observed(a).all():
                raise SchemaError(f"auxiliary {a!r} is not fully observed; proxies need it for every unit")
        return aux

    def _candidates(self, response, rows):
        cfg = self.cfg
        cands = [(a,) for a in self.aux] + glm.parse_terms(cfg.interactions)
        pairs = []
        if cfg.tree.get("enabled", True):
            tree = glm.grow_tree(self.frame.loc[rows], response, self.aux,
                                 max_depth=int(cfg.tree.get("max_depth", 3)),
                                 min_node=int(cfg.tree.get("min_node", 200)))
            pairs = tree.interactions
            for p in pairs:
                if p not in cands and tuple(reversed(p)) not in cands:
                    cands.append(tuple(p))
        return cands, pairs

    # Step 3
    def outcome_models(self):
        self.aux = self._aux()
        self.fits, self.proxies, self.rho = {}, {}, {}
        coef_recs, summ = [], []
        for y in self.cfg.outcomes:
            rows = self.data.observed(y)
            cands, pairs = self._candidates(y, rows)
            sw = glm.stepwise_forward(self.frame, y, cands, family="linear", rows=rows)
            fit = sw.fit
            proxy = build_proxy(fit, self.frame, y)
            self.fits[y], self.proxies[y], self.rho[y] = fit, proxy, proxy.rho_hat
            if proxy.rho_hat < RHO_WEAK:
                warnings.warn(f"{y}: weak proxy (rho = {proxy.rho_hat:.3f})",
                              _weak_proxy_warning())
            for nm, b in fit.coefficients.items():
                coef_recs.append({"outcome": y, "term": nm, "coefficient": b})
            summ.append({
                "outcome": y, "n": fit.n, "k": fit.k, "aic": fit.aic, "rho_hat": proxy.rho_hat,
                "sign_flipped": proxy.sign_flipped,
                "tree_interactions": "; ".join(":".join(p) for p in pairs),
                "selected_terms": "; ".join(sw.selected),
            })
        self.w.csv(3, "outcome_coefficients", pd.DataFrame(coef_recs))
        table = pd.DataFrame(summ)
        self.w.csv(3, "outcome_models", table)
        return {"rho_hat": dict(self.rho),
                "selected_terms": {r["outcome"]: r["selected_terms"] for r in summ}}

    # Step 4
    def auxiliary_search(self):
        cfg = self.cfg
        recs = []
        if cfg.late_auxiliaries:
            late_obs = np.all([self.data.observed(c) for c in cfg.late_auxiliaries], axis=0)
            for y in cfg.outcomes:
                rows = self.data.observed(y) & late_obs
                base = [(a,) for a in self.aux]
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    without = glm.stepwise_forward(self.frame, y, base, rows=rows).fit
                    with_ = glm.stepwise_forward(
                        self.frame, y, base + [(c,) for c in cfg.late_auxiliaries], rows=rows).fit
                yy = self.frame.loc[rows, y].to_numpy(dtype=float)
                sub = self.frame.loc[rows]
                r0 = float(np.corrcoef(glm.predict(without, sub), yy)[0, 1])
                r1 = float(np.corrcoef(glm.predict(with_, sub), yy)[0, 1])
                recs.append({"outcome": y, "rho_without": r0, "rho_with": r1, "gain": r1 - r0,
                             "n_fit": int(rows.sum()),
                             "nonrespondents_with_late_info": int((~self.resp & late_obs).sum()),
                             "nonrespondents": int((~self.resp).sum())})
        cols = ["outcome", "rho_without", "rho_with", "gain", "n_fit",
                "nonrespondents_with_late_info", "nonrespondents"]
        table = pd.DataFrame(recs, columns=cols)
        self.w.csv(4, "auxiliary_gain", table)
        return {"late_auxiliaries": cfg.late_auxiliaries,
                "rho_gain": {r["outcome"]: r["gain"] for r in recs}}

    # Step 5
    def propensity(self):
        self.phat = None
        self.auc = None
        n_nr = int((~self.resp).sum())
        if n_nr == 0:
            empty = pd.DataFrame(columns=["term", "coefficient"])
            self.w.csv(5, "propensity_coefficients", empty)
            self.w.csv(5, "propensity_histogram", propensity_histogram(np.ones(self.data.n)))
            self.w.csv(5, "strata_summary", pd.DataFrame(columns=["outcome", "stratum"]))
            self.corr_py = {y: 0.0 for y in self.cfg.outcomes}
            return {"auc": None, "nonrespondents": 0, "note": "no unit nonresponse; no propensity model"}
        allrows = np.ones(self.data.n, dtype=bool)
        cands, pairs = self._candidates(self.ri, allrows)
        sw = glm.stepwise_forward(self.frame, self.ri, cands, family="logistic")
        model = fit_stage_propensity(self.frame, self.ri, sw.spec)
        self.phat, self.auc = model.phat, model.auc
        coef = pd.DataFrame({"term": model.fit.coefficients.index,
                             "coefficient": model.fit.coefficients.to_numpy()})
        self.w.csv(5, "propensity_coefficients", coef)
        self.w.csv(5, "propensity_histogram", propensity_histogram(self.phat))
        strata = quintile_strata(self.phat[self.resp])
        self.strata = strata
        recs, self.corr_py = [], {}
        for y in self.cfg.outcomes:
            yv = self.frame[y].to_numpy(dtype=float)[self.resp]
            table, corr = stratum_outcome_summary(strata, yv, self.phat[self.resp])
            table.insert(0, "outcome", y)
            recs.append(table)
            self.corr_py[y] = corr
        self.w.csv(5, "strata_summary", pd.concat(recs, ignore_index=True))
        self.w.csv(5, "strata_breaks", pd.DataFrame({"prob": [0.2, 0.4, 0.6, 0.8],
                                                     "break": strata.breaks}))
        return {"auc": self.auc, "selected_terms": sw.selected, "converged": model.fit.converged,
                "nonrespondents": n_nr, "tree_interactions": [":".join(p) for p in pairs],
                "propensity_outcome_corr": dict(self.corr_py)}

    # Step 6
    def assessment(self):
        recs = []
        for y in self.cfg.outcomes:
            proxy = self.proxies[y]
            d = standardized_deviation(proxy)
            v = classify_strength(proxy.rho_hat, d)
            cell = None
            other = None
            if self.phat is not None:
                r = proxy.respondent
                lp = np.log(self.phat / (1 - self.phat))
                other = _residual_corr(proxy.x[r], lp[r], proxy.y[r])
                cell = _table1_cell(self.auc, self.corr_py[y], other)
            dirs = EXPECTED_DIRECTIONS.get(cell, (None,) * 4)
            recs.append({"outcome": y, "rho_hat": v.rho, "rho_class": v.rho_class, "d": v.d,
                         "d_class": v.d_class, "auc": self.auc,
                         "propensity_outcome_corr": self.corr_py.get(y),
                         "other_x_corr": other, "table1_cell": cell,
                         "expected_ipw_bias": dirs[0], "expected_mi_bias": dirs[1],
                         "expected_ipw_var": dirs[2], "expected_mi_var": dirs[3]})
        table = pd.DataFrame(recs)
        self.w.csv(6, "assessment", table)
        return {"verdicts": {r["outcome"]: {"rho_class": r["rho_class"], "d_class": r["d_class"],
                                            "table1_cell": r["table1_cell"]} for r in recs}}

    def _designs(self):
        cfg, f, n = self.cfg, self.frame, self.data.n
        psu = f[cfg.psu].to_numpy() if cfg.psu else None
        stratum = f[cfg.stratum].to_numpy() if cfg.stratum else None
        base = f[cfg.base_weight].to_numpy(dtype=float) if cfg.base_weight else np.ones(n)
        resp_base = np.where(self.resp, base, 0.0)
        designs = {"unweighted": SurveyDesign(np.ones(n), psu, stratum),
                   "base_weighted": SurveyDesign(resp_base, psu, stratum)}
        info = {}
        if cfg.weight:
            final = SurveyDesign(np.where(self.resp, f[cfg.weight].to_numpy(dtype=float), 0.0),
                                 psu, stratum)
            info["final_weight"] = cfg.weight
        else:
            full = SurveyDesign(base, psu, stratum)
            if cfg.weighting_classes:
                classes = f[cfg.weighting_classes].astype(str).agg("|".join, axis=1).to_numpy()
            else:
                classes = np.zeros(n, dtype=int)
            final = weighting_class_adjust(full, self.resp, classes)
            info["weighting_classes"] = cfg.weighting_classes
            if cfg.raking:
                margins = [(f[m["column"]].to_numpy(), m["targets"]) for m in cfg.raking]
                final, res = rake(final, margins, max_iter=int(cfg.raking[0].get("max_iter", 100)))
                info["raking"] = {"converged": res.converged, "iterations": res.iterations,
                                  "max_discrepancy": res.max_discrepancy}
        designs["nonresponse_adjusted"] = final
        return designs, info

    # Step 7
    def weighting(self):
        designs, info = self._designs()
        subs = {g: self.frame[g].to_numpy() for g in self.cfg.subgroups}
        longs = []
        for y in self.cfg.outcomes:
            longs.append(comparison_table(self.frame[y].to_numpy(dtype=float), designs, subs, label=y))
        long = pd.concat(longs, ignore_index=True)
        self.estimates = long
        self.w.csv(7, "estimates_long", long)
        self.w.csv(7, "table2", table2_layout(long, final="nonresponse_adjusted"))
        overall = long[(long["group"] == "overall")]
        return {**info, "overall": {f"{r.outcome}|{r.design}": {"mean": r.mean, "se": r.se,
                                                              "deff": r.deff}
                                    for r in overall.itertuples()}}

    # Step 8
    def external(self):
        est = self.estimates
        final = est[(est["design"] == "nonresponse_adjusted") & (est["group"] == "overall")]
        lookup = {r.outcome: (r.mean, r.se) for r in final.itertuples()}
        table = external_comparison(lookup, self.cfg.benchmarks)
        self.w.csv(8, "external_comparison", table)
        return {"n_benchmarks": len(self.cfg.benchmarks), "flagged": int(table["flagged"].sum())
                if len(table) else 0, "caveat": EXTERNAL_CAVEAT}

    # Step 9
    def sensitivity(self):
        t3, t4, longs = [], [], []
        out = {}
        for y in self.cfg.outcomes:
            proxy = self.proxies[y]
            tab = sensitivity_sweep(proxy, self.cfg.phis)
            wide = tab.wide()
            wide.insert(0, "outcome", y)
            t3.append(wide)
            lg = tab.rows.copy()
            lg.insert(0, "outcome", y)
            lg.insert(1, "subgroup_var", "overall")
            longs.append(lg)
            out[y] = {"overlap": tab.overlap["overall"],
                      "mu": {f"{p:g}": m for p, m in zip(tab.rows["phi"], tab.rows["muY"])}}
            for g in self.cfg.subgroups:
                sub = sensitivity_sweep(proxy, self.cfg.phis, groups=self.frame[g].to_numpy())
                rows = sub.rows[sub.rows["group"] != "overall"].copy()
                w4 = sub.wide()
                w4 = w4[w4["group"] != "overall"]
                w4.insert(0, "outcome", y)
                w4.insert(1, "subgroup_var", g)
                t4.append(w4)
                rows.insert(0, "outcome", y)
                rows.insert(1, "subgroup_var", g)
                longs.append(rows)
        self.w.csv(9, "table3", pd.concat(t3, ignore_index=True))
        self.w.csv(9, "table4", pd.concat(t4, ignore_index=True) if t4 else
                   pd.DataFrame(columns=["outcome", "subgroup_var", "group"]))
        self.w.csv(9, "sweep_long", pd.concat(longs, ignore_index=True))
        return out

    # Step 10
    def item_audit(self):
        table = item_missingness_audit(self.data, self.cfg.outcomes, self.ri)
        self.w.csv(10, "item_audit", table)
        return {r["outcome"]: int(r["item_missing"]) for r in table.to_dict(orient="records")}


def _weak_proxy_warning():
    from .errors import WeakProxyWarning
    return WeakProxyWarning


def run_patterns(config: NrbaConfig) -> NrbaReport:
    """Step 1 only."""
    run = _Run(config)
    run.step(1, run.patterns)
    run.w.json("report.json", {**run.summary, "warnings": run.warnings})
    return NrbaReport(config.output_dir, run.summary, run.w.artifacts, run.warnings)


def run_pipeline(config: NrbaConfig) -> NrbaReport:
    """Run all ten steps in order and write the report tree to ``config.output_dir``."""
    run = _Run(config)
    steps = [run.patterns, run.key_variables, run.outcome_models, run.auxiliary_search,
             run.propensity, run.assessment, run.weighting, run.external, run.sensitivity,
             run.item_audit]
    for k, fn in enumerate(steps, start=1):
        run.step(k, fn)
    run.summary["artifacts"] = run.w.artifacts
    run.w.json("report.json", {**run.summary, "warnings": run.warnings})
    return NrbaReport(config.output_dir, run.summary, run.w.artifacts, run.warnings)


ECLS_LIKE_SCHEMA = [
    {"name": "child_id", "role": "id", "measurement": "categorical"},
    {"name": "stratum", "role": "stratum", "measurement": "categorical"},
    {"name": "psu", "role": "psu", "measurement": "categorical"},
    {"name": "base_weight", "role": "base-weight"},
    {"name": "responded", "role": "response-indicator"},
    {"name": "reading", "role": "outcome", "missing_sentinels": [-9]},
    {"name": "math", "role": "outcome", "missing_sentinels": [-9]},
    {"name": "bmi", "role": "outcome", "missing_sentinels": [-9]},
    {"name": "impulsive", "role": "outcome", "missing_sentinels": [-9]},
    {"name": "externalizing", "role": "outcome", "missing_sentinels": [-9]},
    {"name": "sex", "measurement": "categorical"},
    {"name": "birth_year", "measurement": "categorical"},
    {"name": "race", "role": "subgroup", "measurement": "categorical"},
    {"name": "school_type", "role": "subgroup", "measurement": "categorical"},
    {"name": "region", "measurement": "categorical"},
    {"name": "locale", "measurement": "categorical"},
    {"name": "n_students"},
    {"name": "fte"},
    {"name": "st_ratio"},
    {"name": "low_grade", "measurement": "categorical"},
    {"name": "high_grade", "measurement": "categorical"},
    {"name": "pct_kg"},
    {"name": "pct_asian"},
    {"name": "pct_hisp"},
    {"name": "pct_black"},
    {"name": "ses"},
    {"name": "home_language", "measurement": "categorical"},
]

ECLS_LIKE_AUXILIARIES = ["sex", "birth_year", "race", "school_type", "region", "locale",
                         "n_students", "fte", "st_ratio", "low_grade", "high_grade", "pct_kg",
                         "pct_asian", "pct_hisp", "pct_black"]


def write_bundled_example(outdir, seed: int = 20110901, n_psu: int = 100, per_psu: int = 50) -> Path:
    """Write the synthetic cohort file and a matching config; returns the config path."""
    from .simlab import ecls_like_dataset

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    df = ecls_like_dataset(seed, n_psu=n_psu, per_psu=per_psu)
    df.to_csv(outdir / "ecls_like.csv", index=False, lineterminator="\n")
    cfg = {
        "input": {"path": "ecls_like.csv", "columns": ECLS_LIKE_SCHEMA},
        "outcomes": ["reading", "math", "bmi", "impulsive", "externalizing"],
        "auxiliaries": ECLS_LIKE_AUXILIARIES,
        "late_auxiliaries": ["ses", "home_language"],
        "tree": {"enabled": True, "max_depth": 3, "min_node": 200},
        "subgroups": ["race", "school_type"],
        "design": {"base_weight": "base_weight", "psu": "psu", "stratum": "stratum"},
        "response_indicator": "responded",
        "weighting_classes": ["school_type", "race", "birth_year"],
        "phis": [0.0, 0.5, 1.0],
        "benchmarks": [{"label": "reading", "mean": 54.0, "se": 0.4, "source": "synthetic benchmark"},
                       {"label": "math", "mean": 36.5, "se": 0.3, "source": "synthetic benchmark"}],
        "instrument_groups": {"child": ["reading", "math", "bmi"], "parent": ["impulsive"],
                              "teacher": ["externalizing"]},
        "output_dir": "report",
        "seed": seed,
    }
    path = outdir / "nrba_config.yaml"
    path.write_text(yaml.safe_dump(cfg, sort_keys=False))
    return path
