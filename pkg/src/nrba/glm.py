"""Regression numerics for outcome and response-propensity models.

Ordinary least squares, logistic regression by iteratively reweighted
least squares, AIC, forward stepwise selection, a greedy regression tree
used to screen two-way interactions, and the exact Mann-Whitney AUC.

Models are described by a :class:`DesignMatrixSpec`: a list of terms, where
a term is a tuple of one column (main effect) or two columns (two-way
interaction). Categorical columns (non-numeric dtype) are expanded to
indicators with the first sorted level as the reference.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import pandas as pd
from scipy.special import expit
from scipy.stats import rankdata

from .errors import (
    CellError,
    ConvergenceWarning,
    DegenerateResponseError,
    InsufficientDataError,
    PerfectFitError,
    RankDeficiencyWarning,
    SeparationWarning,
    SingularFitError,
    SkippedTermWarning,
    UnseenLevelError,
)

RANK_TOL = 1e-9
IRLS_TOL = 1e-10
IRLS_MAX_ITER = 50
SEPARATION_ETA = 30.0


def parse_term(term) -> tuple:
    if isinstance(term, tuple):
        return term
    parts = [s.strip() for s in str(term).split(":")]
    if not 1 <= len(parts) <= 2 or not all(parts):
        raise ValueError(f"cannot parse term {term!r}")
    return tuple(parts)


def parse_terms(terms: Sequence) -> list:
    """Parse ``"a"``, ``"a:b"`` and ``"a*b"`` strings into term tuples, deduplicated in order."""
    out = []
    for t in terms:
        if isinstance(t, str) and "*" in t:
            a, b = (s.strip() for s in t.split("*"))
            expanded = [(a,), (b,), (a, b)]
        else:
            expanded = [parse_term(t)]
        for e in expanded:
            if e not in out and tuple(reversed(e)) not in out:
                out.append(e)
    return out


def term_label(term: tuple) -> str:
    return ":".join(term)


@dataclass(frozen=True)
class DesignMatrixSpec:
    terms: tuple = ()
    intercept: bool = True

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(parse_terms(self.terms)))

    @property
    def columns(self) -> list:
        cols = []
        for t in self.terms:
            for c in t:
                if c not in cols:
                    cols.append(c)
        return cols

    def with_term(self, term) -> "DesignMatrixSpec":
        return DesignMatrixSpec(self.terms + (parse_term(term),), self.intercept)


def _as_frame(data) -> pd.DataFrame:
    if isinstance(data, pd.DataFrame):
        return data
    if hasattr(data, "frame"):
        return data.frame()
    return pd.DataFrame(data)


def is_categorical(series: pd.Series) -> bool:
    return not pd.api.types.is_numeric_dtype(series) or pd.api.types.is_bool_dtype(series)


def complete_rows(frame: pd.DataFrame, columns) -> np.ndarray:
    cols = list(columns)
    if not cols:
        return np.ones(len(frame), dtype=bool)
    return frame[cols].notna().all(axis=1).to_numpy()


def _block(frame, col, levels, learn):
    s = frame[col]
    if not is_categorical(s):
        return s.to_numpy(dtype=float)[:, None], [col]
    codes, present = pd.factorize(s.to_numpy(dtype=object), sort=True)
    if learn:
        levels[col] = list(present)
    lv = levels[col]
    pos = {v: i for i, v in enumerate(lv)}
    for v in present:
        if v not in pos:
            raise UnseenLevelError(col, v)
    if (codes < 0).any():
        raise UnseenLevelError(col, None)
    lc = np.array([pos[v] for v in present], dtype=int)[codes] if len(present) else codes
    mats = [] if len(lv) < 2 else [(lc[:, None] == np.arange(1, len(lv))[None, :]).astype(float)]
    names = [f"{col}[{lev}]" for lev in lv[1:]]
    if not mats:
        return np.zeros((len(codes), 0)), []
    return np.column_stack(mats), names


def build_design(frame: pd.DataFrame, spec: DesignMatrixSpec, levels: dict | None = None):
    """Expand ``spec`` over ``frame``.

    Returns ``(X, names, levels)``. When ``levels`` is None the categorical
    levels are learned from ``frame``; otherwise any value outside the given
    levels raises :class:`UnseenLevelError`.
    """
    learn = levels is None
    levels = {} if learn else dict(levels)
    n = len(frame)
    blocks, names = [], []
    if spec.intercept:
        blocks.append(np.ones((n, 1)))
        names.append("(Intercept)")
    cache = {}
    for col in spec.columns:
        cache[col] = _block(frame, col, levels, learn and col not in levels)
    for term in spec.terms:
        if len(term) == 1:
            m, nm = cache[term[0]]
        else:
            (ma, na), (mb, nb) = cache[term[0]], cache[term[1]]
            m = (ma[:, :, None] * mb[:, None, :]).reshape(n, -1)
            nm = [f"{a}:{b}" for a in na for b in nb]
        blocks.append(m)
        names.extend(nm)
    X = np.hstack(blocks) if blocks else np.zeros((n, 0))
    return X, names, levels


def independent_columns(X: np.ndarray, tol: float = RANK_TOL) -> np.ndarray:
    """Indices of columns kept when dropping, first-come, any column in the span of earlier ones."""
    keep = list(range(X.shape[1]))
    while keep:
        sub = X[:, keep]
        norms = np.linalg.norm(sub, axis=0)
        if sub.shape[0] >= sub.shape[1]:
            r = np.abs(np.diag(np.linalg.qr(sub, mode="r")))
        else:
            r = np.abs(np.diag(np.linalg.qr(sub, mode="r"), k=0))
            r = np.concatenate([r, np.zeros(sub.shape[1] - r.size)])
        bad = np.flatnonzero((r <= tol * np.maximum(norms, 1e-300)) | (norms == 0))
        if bad.size == 0:
            break
        # drop only the first offender; later diagonals are unreliable once one pivot vanished
        del keep[int(bad[0])]
    return np.array(keep, dtype=int)


@dataclass
class LinearFit:
    coefficients: pd.Series
    rss: float
    sigma2: float
    n: int
    k: int
    aic: float
    spec: DesignMatrixSpec
    response: str
    levels: dict
    dropped: list = field(default_factory=list)
    cov_unscaled: np.ndarray = None
    family: str = "linear"

    @property
    def perfect(self) -> bool:
        return np.isneginf(self.aic)


@dataclass
class LogisticFit:
    coefficients: pd.Series
    deviance: float
    aic: float
    converged: bool
    iterations: int
    n: int
    k: int
    spec: DesignMatrixSpec
    response: str
    levels: dict
    dropped: list = field(default_factory=list)
    fitted: np.ndarray = None
    cov: np.ndarray = None
    family: str = "logistic"


def _prepare(data, spec, response, rows):
    frame = _as_frame(data)
    usable = complete_rows(frame, [response] + spec.columns)
    if rows is not None:
        usable &= np.asarray(rows, dtype=bool)
    sub = frame if usable.all() else frame.loc[usable]
    if len(sub) == 0:
        raise InsufficientDataError(f"no usable rows for response {response!r}")
    X, names, levels = build_design(sub, spec)
    keep = independent_columns(X)
    dropped = [names[j] for j in range(len(names)) if j not in set(keep)]
    if dropped:
        warnings.warn(f"rank-deficient design for {response!r}; dropped {dropped}", RankDeficiencyWarning)
    X = X[:, keep]
    kept = [names[j] for j in keep]
    y = sub[response].to_numpy(dtype=float)
    if X.shape[0] < X.shape[1]:
        raise SingularFitError(f"{X.shape[0]} rows for {X.shape[1]} retained columns")
    return X, y, kept, levels, dropped


def fit_ols(data, spec: DesignMatrixSpec, response: str, rows=None) -> LinearFit:
    """Least-squares fit on the complete-case rows of ``data``.

    Rows missing the response or any spec column are dropped. Columns in the
    span of earlier columns are dropped (first-come kept) and reported in
    ``dropped``.
    """
    X, y, names, levels, dropped = _prepare(data, spec, response, rows)
    n, k = X.shape
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ beta
    rss = float(resid @ resid)
    tss = float(y @ y)
    if rss <= 1e-26 * max(tss, 1.0):
        rss = 0.0
        aic_val = -np.inf
    else:
        aic_val = n * np.log(rss / n) + 2 * (k + 1)
    sigma2 = rss / (n - k) if n > k else 0.0
    cov = np.linalg.pinv(X.T @ X) if k else np.zeros((0, 0))
    return LinearFit(
        coefficients=pd.Series(beta, index=names),
        rss=rss,
        sigma2=sigma2,
        n=n,
        k=k,
        aic=float(aic_val),
        spec=spec,
        response=response,
        levels=levels,
        dropped=dropped,
        cov_unscaled=cov,
    )


def _logistic_deviance(y, eta):
    # -2 loglik with log p = -log(1+e^-eta), log(1-p) = -log(1+e^eta)
    return float(2.0 * np.sum(y * np.logaddexp(0.0, -eta) + (1 - y) * np.logaddexp(0.0, eta)))


def _irls(X, y, max_iter=IRLS_MAX_ITER, tol=IRLS_TOL, intercept=True):
    k = X.shape[1]
    beta = np.zeros(k)
    if intercept and k:
        ybar = y.mean()
        beta[0] = np.log(ybar / (1 - ybar))
    eta = X @ beta
    dev = _logistic_deviance(y, eta)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        p = expit(eta)
        w = np.maximum(p * (1 - p), 1e-300)
        sw = np.sqrt(w)
        z = eta + (y - p) / w
        new, *_ = np.linalg.lstsq(X * sw[:, None], z * sw, rcond=None)
        new_eta = X @ new
        new_dev = _logistic_deviance(y, new_eta)
        halvings = 0
        while (not np.isfinite(new_dev) or new_dev > dev + 1e-12 * abs(dev)) and halvings < 20:
            new = (new + beta) / 2
            new_eta = X @ new
            new_dev = _logistic_deviance(y, new_eta)
            halvings += 1
        change = abs(new_dev - dev)
        beta, eta = new, new_eta
        prev, dev = dev, new_dev
        if dev == 0.0:
            break
        if change / abs(dev) < tol:
            converged = True
            break
    return beta, eta, dev, converged, it


def fit_logistic(data, spec: DesignMatrixSpec, response: str, rows=None) -> LogisticFit:
    """Logistic regression by IRLS.

    Iterates until the relative change in deviance is below 1e-10, for at
    most 50 iterations. A non-converged fit whose linear predictor exceeds
    30 in absolute value is reported with a :class:`SeparationWarning`.
    """
    X, y, names, levels, dropped = _prepare(data, spec, response, rows)
    if not np.all((y == 0) | (y == 1)):
        raise DegenerateResponseError(f"response {response!r} must be 0/1")
    if y.min() == y.max():
        raise DegenerateResponseError(f"response {response!r} has a single class ({y[0]:g})")
    beta, eta, dev, converged, it = _irls(X, y, intercept=spec.intercept)
    if not converged:
        if np.max(np.abs(eta)) > SEPARATION_ETA:
            warnings.warn(
                f"logistic fit for {response!r} did not converge; linear predictor "
                f"reaches {np.max(np.abs(eta)):.1f} (separation)",
                SeparationWarning,
            )
        else:
            warnings.warn(f"logistic fit for {response!r} did not converge in {it} iterations",
                          ConvergenceWarning)
    p = expit(eta)
    info = (X * (p * (1 - p))[:, None]).T @ X
    k = X.shape[1]
    return LogisticFit(
        coefficients=pd.Series(beta, index=names),
        deviance=dev,
        aic=dev + 2 * k,
        converged=converged,
        iterations=it,
        n=len(y),
        k=k,
        spec=spec,
        response=response,
        levels=levels,
        dropped=dropped,
        fitted=p,
        cov=np.linalg.pinv(info),
    )


def model_matrix(fit, data) -> np.ndarray:
    """Design matrix for ``data`` restricted to the fit's retained columns."""
    frame = _as_frame(data)
    cols = fit.spec.columns
    if cols:
        miss = ~complete_rows(frame, cols)
        if miss.any():
            i = int(np.flatnonzero(miss)[0])
            col = next(c for c in cols if pd.isna(frame[c].iloc[i]))
            raise CellError(f"row {i}: predictor {col!r} is missing", row=i, column=col)
    X, names, _ = build_design(frame, fit.spec, fit.levels)
    idx = [names.index(nm) for nm in fit.coefficients.index]
    return X[:, idx]


def predict(fit, data, scale: str = "response") -> np.ndarray:
    if scale not in ("linear", "response"):
        raise ValueError(f"scale must be 'linear' or 'response', got {scale!r}")
    eta = model_matrix(fit, data) @ fit.coefficients.to_numpy()
    if scale == "response" and fit.family == "logistic":
        return expit(eta)
    return eta


def aic(fit) -> float:
    """``n ln(rss/n) + 2(k+1)`` for linear fits, ``deviance + 2k`` for logistic fits."""
    if fit.family == "linear":
        if fit.rss == 0.0:
            raise PerfectFitError(f"perfect fit for {fit.response!r}: AIC is -inf")
        return fit.n * np.log(fit.rss / fit.n) + 2 * (fit.k + 1)
    return fit.deviance + 2 * fit.k


@dataclass
class StepwiseResult:
    spec: DesignMatrixSpec
    fit: object
    path: list
    skipped: list
    rows: np.ndarray

    @property
    def selected(self) -> list:
        return [term_label(t) for t in self.spec.terms]


def _fit(family, frame, spec, response, rows):
    return (fit_ols if family == "linear" else fit_logistic)(frame, spec, response, rows)


def _eligible(term, current, main_candidates) -> bool:
    if len(term) == 1:
        return True
    return all((c,) in current for c in term if (c,) in main_candidates)


def stepwise_forward(data, response: str, candidates: Sequence, family: str = "linear",
                     rows=None, intercept: bool = True) -> StepwiseResult:
    """Forward selection by AIC from the intercept-only model.

    At each step every eligible candidate is tried and the one giving the
    lowest AIC is added, provided it lowers the AIC. An interaction is
    eligible once its main effects, when they are candidates, are in the
    model. Ties go to the earlier candidate. All fits share one set of
    complete-case rows so AIC values are comparable.

    Candidates that cannot be used (no observed values, or constant on the
    complete-case rows) are skipped with a :class:`SkippedTermWarning`.
    """
    if family not in ("linear", "logistic"):
        raise ValueError(f"unknown family {family!r}")
    cands = parse_terms(candidates)
    if not cands:
        raise ValueError("stepwise_forward needs at least one candidate term")
    frame = _as_frame(data)
    base = frame[response].notna().to_numpy()
    if rows is not None:
        base &= np.asarray(rows, dtype=bool)
    skipped = []
    usable = []
    for t in cands:
        if any(frame.loc[base, c].notna().sum() == 0 for c in t):
            skipped.append(term_label(t))
        else:
            usable.append(t)
    cols = []
    for t in usable:
        cols.extend(c for c in t if c not in cols)
    cc = base & complete_rows(frame, cols)
    if not cc.any():
        raise InsufficientDataError(f"no complete-case rows for stepwise selection of {response!r}")
    sub = frame.loc[cc, list(dict.fromkeys([response] + cols))]
    kept = []
    for t in usable:
        X, _, _ = build_design(sub, DesignMatrixSpec((t,), intercept=False))
        if X.shape[1] == 0 or np.all(np.ptp(X, axis=0) == 0):
            skipped.append(term_label(t))
        else:
            kept.append(t)
    if skipped:
        warnings.warn(f"stepwise {response!r}: skipped unusable terms {skipped}", SkippedTermWarning)

    main = {t for t in kept if len(t) == 1}
    spec = DesignMatrixSpec((), intercept)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        current = _fit(family, sub, spec, response, None)
    path = [(None, current.aic)]
    remaining = list(kept)
    while remaining:
        best = None
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            for t in remaining:
                if not _eligible(t, spec.terms, main):
                    continue
                trial = _fit(family, sub, spec.with_term(t), response, None)
                if best is None or trial.aic < best[1].aic:
                    best = (t, trial)
        if best is None or not best[1].aic < current.aic:
            break
        t, current = best
        spec = spec.with_term(t)
        remaining.remove(t)
        path.append((term_label(t), current.aic))
    final = _fit(family, sub, spec, response, None)
    return StepwiseResult(spec=spec, fit=final, path=path, skipped=skipped, rows=cc)


@dataclass
class TreeNode:
    n: int
    value: float
    impurity: float
    depth: int
    column: str = None
    threshold: float = None
    left_levels: tuple = None
    gain: float = 0.0
    left: "TreeNode" = None
    right: "TreeNode" = None

    @property
    def is_leaf(self) -> bool:
        return self.column is None

    def splits(self) -> list:
        """Split columns in breadth-first order."""
        out, queue = [], [self]
        while queue:
            node = queue.pop(0)
            if not node.is_leaf:
                out.append(node.column)
                queue.extend([node.left, node.right])
        return out


@dataclass
class Tree:
    root: TreeNode
    interactions: list
    criterion: str


def _impurity(y, criterion):
    if len(y) == 0:
        return 0.0
    if criterion == "gini":
        p = y.mean()
        return float(len(y) * 2 * p * (1 - p))
    return float(((y - y.mean()) ** 2).sum())


def _best_split_numeric(x, y, min_node, criterion):
    order = np.argsort(x, kind="stable")
    xs, ys = x[order], y[order]
    n = len(ys)
    cs, cs2 = np.cumsum(ys), np.cumsum(ys * ys)
    tot, tot2 = cs[-1], cs2[-1]
    nl = np.arange(1, n)
    sl, sl2 = cs[:-1], cs2[:-1]
    nr = n - nl
    sr, sr2 = tot - sl, tot2 - sl2
    if criterion == "gini":
        pl, pr = sl / nl, sr / nr
        child = nl * 2 * pl * (1 - pl) + nr * 2 * pr * (1 - pr)
    else:
        child = (sl2 - sl * sl / nl) + (sr2 - sr * sr / nr)
    valid = (xs[1:] > xs[:-1]) & (nl >= min_node) & (nr >= min_node)
    if not valid.any():
        return None
    child = np.where(valid, child, np.inf)
    i = int(np.argmin(child))  # first minimum = lowest threshold
    return float(child[i]), float((xs[i] + xs[i + 1]) / 2)


def grow_tree(data, response: str, candidates: Sequence[str], max_depth: int = 4,
              min_node: int = 50, criterion: str = "auto") -> Tree:
    """Greedy binary tree used to screen interactions.

    Splits maximize the reduction in sum of squares (continuous response) or
    in n-weighted Gini impurity (0/1 response). Categorical columns are split
    after ordering their levels by mean response. Returns the tree and the
    list of (ancestor, descendant) split-column pairs, deduplicated.
    """
    if max_depth < 1:
        raise ValueError("max_depth must be >= 1")
    frame = _as_frame(data)
    cols = list(candidates)
    sub = frame.loc[complete_rows(frame, [response] + cols)]
    y = sub[response].to_numpy(dtype=float)
    if criterion == "auto":
        criterion = "gini" if np.all((y == 0) | (y == 1)) else "sse"
    enc = {}
    for c in cols:
        s = sub[c]
        enc[c] = s.astype(object).to_numpy() if is_categorical(s) else s.to_numpy(dtype=float)

    def grow(idx, depth):
        yy = y[idx]
        imp = _impurity(yy, criterion)
        node = TreeNode(n=len(idx), value=float(yy.mean()) if len(idx) else np.nan,
                        impurity=imp, depth=depth)
        if depth >= max_depth or imp <= 0 or len(idx) < 2 * min_node:
            return node
        best = None
        for c in cols:
            x = enc[c][idx]
            if x.dtype == object:
                levs = sorted(set(x))
                means = {lv: yy[x == lv].mean() for lv in levs}
                ordered = sorted(levs, key=lambda lv: (means[lv], str(lv)))
                pos = np.array([ordered.index(v) for v in x], dtype=float)
                res = _best_split_numeric(pos, yy, min_node, criterion)
                if res is None:
                    continue
                child, thr = res
                left_levels = tuple(lv for i, lv in enumerate(ordered) if i < thr)
            else:
                res = _best_split_numeric(x, yy, min_node, criterion)
                if res is None:
                    continue
                child, thr = res
                left_levels = None
            gain = imp - child
            if best is None or gain > best[0]:
                best = (gain, c, thr, left_levels)
        if best is None or best[0] <= 1e-12 * imp:
            return node
        gain, c, thr, left_levels = best
        x = enc[c][idx]
        go_left = np.isin(x, left_levels) if left_levels is not None else x <= thr
        node.column, node.gain = c, float(gain)
        node.threshold = None if left_levels is not None else thr
        node.left_levels = left_levels
        node.left = grow(idx[go_left], depth + 1)
        node.right = grow(idx[~go_left], depth + 1)
        return node

    root = grow(np.arange(len(y)), 0)

    pairs = []
    seen = set()

    def collect(node, ancestors):
        if node is None or node.is_leaf:
            return
        for a in ancestors:
            key = frozenset((a, node.column))
            if a != node.column and key not in seen:
                seen.add(key)
                pairs.append((a, node.column))
        nxt = ancestors + [node.column]
        collect(node.left, nxt)
        collect(node.right, nxt)

    collect(root, [])
    return Tree(root=root, interactions=pairs, criterion=criterion)


def auc(scores, labels) -> float:
    """Area under the ROC curve as the Mann-Whitney statistic, ties counted as one half."""
    s = np.asarray(scores, dtype=float)
    lab = np.asarray(labels)
    if s.shape != lab.shape:
        raise ValueError("scores and labels differ in length")
    pos = lab == 1
    n1 = int(pos.sum())
    n0 = int((lab == 0).sum())
    if n1 + n0 != lab.size:
        raise ValueError("labels must be 0/1")
    if n1 == 0 or n0 == 0:
        raise DegenerateResponseError("auc needs both classes among the labels")
    ranks = rankdata(s)  # average ranks: multiples of 1/2, exact in float64
    u = ranks[pos].sum() - n1 * (n1 + 1) / 2.0
    return float(u / (n1 * n0))
