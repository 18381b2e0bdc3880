"""Rectangular survey data with an explicit missingness mask (Step 1).

Cells are parsed according to a column schema: continuous columns become
floats, categorical columns become strings, and any raw value listed as a
sentinel (for example ``-9``) or left blank is recorded as missing in the
mask rather than kept as a value.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from .errors import CellError, ParseError, SchemaError

ROLES = (
    "outcome",
    "auxiliary",
    "weight",
    "base-weight",
    "psu",
    "stratum",
    "subgroup",
    "response-indicator",
    "id",
)
MEASUREMENTS = ("continuous", "categorical")
_SINGLETON_ROLES = ("weight", "psu", "stratum", "response-indicator")
EXHAUSTIVE_MONOTONE_MAX_P = 6


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    role: str = "auxiliary"
    measurement: str = "continuous"
    missing_sentinels: tuple = ()

    def __post_init__(self):
        if self.role not in ROLES:
            raise SchemaError(f"column {self.name!r}: unknown role {self.role!r}")
        if self.measurement not in MEASUREMENTS:
            raise SchemaError(f"column {self.name!r}: unknown measurement {self.measurement!r}")
        object.__setattr__(self, "missing_sentinels", tuple(self.missing_sentinels))

    @classmethod
    def from_dict(cls, entry: dict) -> "ColumnSpec":
        return cls(
            name=str(entry["name"]),
            role=entry.get("role", "auxiliary"),
            measurement=entry.get("measurement", "continuous"),
            missing_sentinels=tuple(entry.get("missing_sentinels", ()) or ()),
        )


def validate_schema(schema: Sequence[ColumnSpec]) -> None:
    names = [c.name for c in schema]
    dupes = sorted({n for n in names if names.count(n) > 1})
    if dupes:
        raise SchemaError(f"duplicate column names in schema: {dupes}")
    for role in _SINGLETON_ROLES:
        holders = [c.name for c in schema if c.role == role]
        if len(holders) > 1:
            raise SchemaError(f"at most one {role} column allowed, got {holders}")


def _is_sentinel(raw: str, spec: ColumnSpec) -> bool:
    for s in spec.missing_sentinels:
        if raw == str(s):
            return True
        if isinstance(s, (int, float)) and not isinstance(s, bool):
            try:
                if float(raw) == float(s):
                    return True
            except ValueError:
                pass
    return False


@dataclass
class RectDataset:
    """An n x p table of cells plus the matching observed/missing mask.

    ``values`` holds floats (NaN where missing) for continuous columns and
    strings (None where missing) for categorical ones. ``mask`` is True
    where the cell is observed.
    """

    columns: list
    values: pd.DataFrame
    mask: np.ndarray

    def __post_init__(self):
        validate_schema(self.columns)
        names = [c.name for c in self.columns]
        if list(self.values.columns) != names:
            raise SchemaError("value columns do not match the column specs")
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.mask.shape != self.values.shape:
            raise SchemaError(f"mask shape {self.mask.shape} != values shape {self.values.shape}")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    @property
    def names(self) -> list:
        return [c.name for c in self.columns]

    def spec(self, name: str) -> ColumnSpec:
        for c in self.columns:
            if c.name == name:
                return c
        raise SchemaError(f"unknown column {name!r}")

    def by_role(self, role: str) -> list:
        return [c.name for c in self.columns if c.role == role]

    def role_column(self, role: str):
        cols = self.by_role(role)
        return cols[0] if cols else None

    def observed(self, name: str) -> np.ndarray:
        return self.mask[:, self.names.index(name)].copy()

    def levels(self, name: str) -> list:
        if self.spec(name).measurement != "categorical":
            raise SchemaError(f"column {name!r} is not categorical")
        return sorted(self.values.loc[self.observed(name), name].unique())

    def frame(self) -> pd.DataFrame:
        return self.values.copy()

    def subset(self, rows) -> "RectDataset":
        rows = np.asarray(rows)
        if rows.dtype == bool:
            rows = np.flatnonzero(rows)
        return RectDataset(
            self.columns,
            self.values.iloc[rows].reset_index(drop=True),
            self.mask[rows],
        )

    @classmethod
    def from_frame(cls, df: pd.DataFrame, schema: Sequence[ColumnSpec]) -> "RectDataset":
        """Build a dataset from an in-memory frame, applying the same coercion as file loading."""
        schema = list(schema)
        validate_schema(schema)
        missing = [c.name for c in schema if c.name not in df.columns]
        if missing:
            raise SchemaError(f"columns {missing} not present in frame")
        raw = []
        for _, row in df[[c.name for c in schema]].iterrows():
            raw.append(["" if pd.isna(v) else _raw_str(v) for v in row])
        return _coerce(raw, schema, first_line=1)


def _raw_str(v) -> str:
    if isinstance(v, float) and v.is_integer():
        return str(int(v))
    return str(v)


def _coerce(rows: list, schema: list, first_line: int) -> RectDataset:
    n, p = len(rows), len(schema)
    mask = np.ones((n, p), dtype=bool)
    data = {}
    for j, spec in enumerate(schema):
        if spec.measurement == "continuous":
            col = np.full(n, np.nan)
        else:
            col = np.empty(n, dtype=object)
        for i, row in enumerate(rows):
            raw = row[j].strip()
            if raw == "" or raw.upper() == "NA" or _is_sentinel(raw, spec):
                mask[i, j] = False
                if spec.measurement == "categorical":
                    col[i] = None
                continue
            if spec.measurement == "continuous":
                try:
                    col[i] = float(raw)
                except ValueError:
                    raise CellError(
                        f"row {first_line + i}, column {spec.name!r}: "
                        f"non-numeric value {raw!r} in continuous column",
                        row=first_line + i,
                        column=spec.name,
                    ) from None
            else:
                col[i] = raw
        data[spec.name] = col

    for j, spec in enumerate(schema):
        if spec.role != "response-indicator":
            continue
        bad = np.flatnonzero(~mask[:, j])
        if bad.size:
            raise ParseError(
                f"response indicator {spec.name!r} missing on rows "
                f"{[first_line + int(i) for i in bad[:10]]}",
                row=first_line + int(bad[0]),
            )
        vals = data[spec.name] if spec.measurement == "continuous" else np.array(
            [float(v) for v in data[spec.name]]
        )
        off = np.flatnonzero((vals != 0) & (vals != 1))
        if off.size:
            raise CellError(
                f"response indicator {spec.name!r} must be 0/1 (row {first_line + int(off[0])})",
                row=first_line + int(off[0]),
                column=spec.name,
            )
        data[spec.name] = vals.astype(float)

    return RectDataset(schema, pd.DataFrame(data, columns=[c.name for c in schema]), mask)


def load_table(path, schema: Sequence[ColumnSpec], delimiter: str = ",") -> RectDataset:
    """Read a delimited text file with one header row into a RectDataset.

    Raises
    ------
    SchemaError
        Header columns absent from the schema, or schema columns absent from the header.
    ParseError
        A row with the wrong number of fields (the file line number is reported).
    CellError
        A non-numeric value in a continuous column that is not a sentinel.
    """
    schema = list(schema)
    validate_schema(schema)
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError(f"{path}: empty file", row=1) from None
        known = {c.name for c in schema}
        unknown = [h for h in header if h not in known]
        if unknown:
            raise SchemaError(f"{path}: columns not in schema: {unknown}")
        absent = [c.name for c in schema if c.name not in header]
        if absent:
            raise SchemaError(f"{path}: schema columns missing from header: {absent}")
        order = [header.index(c.name) for c in schema]
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(
                    f"{path}: line {lineno} has {len(row)} fields, expected {len(header)}",
                    row=lineno,
                )
            rows.append([row[k] for k in order])
    return _coerce(rows, schema, first_line=2)


def is_monotone(R: np.ndarray) -> bool:
    """True if some column ordering makes every row of the 0/1 matrix non-increasing."""
    R = np.asarray(R, dtype=int)
    if R.ndim != 2 or R.shape[1] <= 1 or R.shape[0] == 0:
        return True
    rows = np.unique(R, axis=0)
    p = R.shape[1]
    if p <= EXHAUSTIVE_MONOTONE_MAX_P:
        for perm in itertools.permutations(range(p)):
            if np.all(np.diff(rows[:, list(perm)], axis=1) <= 0):
                return True
        return False
    # Nested missingness sets are ordered by their size, so sorting by
    # missing count is exact for true staircases.
    order = np.argsort(-R.sum(axis=0), kind="stable")
    return bool(np.all(np.diff(rows[:, order], axis=1) <= 0))


@dataclass
class ResponsePattern:
    R: np.ndarray
    columns: list
    pattern_classes: list = field(default_factory=list)
    monotone: bool = True
    column_missing_rates: pd.Series = None

    @property
    def n(self) -> int:
        return self.R.shape[0]

    def classes_frame(self) -> pd.DataFrame:
        recs = [dict(zip(self.columns, pat), count=cnt) for pat, cnt in self.pattern_classes]
        return pd.DataFrame(recs, columns=list(self.columns) + ["count"])

    def rates_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "column": list(self.columns),
                "n_missing": (self.R == 0).sum(axis=0),
                "missing_rate": self.column_missing_rates.to_numpy(),
            }
        )

    def to_dict(self) -> dict:
        return {
            "n": int(self.n),
            "monotone": bool(self.monotone),
            "n_pattern_classes": len(self.pattern_classes),
            "missing_rates": {c: float(r) for c, r in self.column_missing_rates.items()},
        }


def missingness_summary(d: RectDataset, columns: Iterable[str] | None = None) -> ResponsePattern:
    """Per-column missing rates, distinct response patterns, and the monotone flag."""
    if d.n == 0:
        raise ParseError("empty dataset")
    cols = list(columns) if columns is not None else d.names
    idx = [d.names.index(c) for c in cols]
    R = d.mask[:, idx].astype(int)
    pats, counts = np.unique(R, axis=0, return_counts=True)
    classes = [(tuple(int(v) for v in pat), int(c)) for pat, c in zip(pats, counts)]
    # count descending; among equal counts, more-observed patterns first
    classes.sort(key=lambda pc: (-pc[1], tuple(-v for v in pc[0])))
    rates = pd.Series((R == 0).sum(axis=0) / d.n, index=cols, name="missing_rate")
    return ResponsePattern(R=R, columns=cols, pattern_classes=classes,
                           monotone=is_monotone(R), column_missing_rates=rates)


def cross_pattern_table(d: RectDataset, groups) -> pd.DataFrame:
    """Joint response counts across instrument groups.

    ``groups`` is a mapping of group name to column list, or a plain list of
    column lists (named ``G1``, ``G2``, ...). A row responds to a group when
    every column of the group is observed. The result has one row per
    combination of group response (1) and nonresponse (0), all 2**k of them.
    """
    if isinstance(groups, dict):
        named = list(groups.items())
    else:
        named = [(f"G{i + 1}", cols) for i, cols in enumerate(groups)]
    if not named:
        raise SchemaError("cross_pattern_table needs at least one group")
    flags = []
    for name, cols in named:
        cols = list(cols)
        if not cols:
            raise SchemaError(f"group {name!r} is empty")
        idx = [d.names.index(c) for c in cols]
        flags.append(d.mask[:, idx].all(axis=1))
    flags = np.column_stack(flags).astype(int)
    recs = []
    for combo in itertools.product((1, 0), repeat=len(named)):
        cnt = int(np.all(flags == np.array(combo), axis=1).sum())
        recs.append(dict(zip([nm for nm, _ in named], combo), count=cnt))
    return pd.DataFrame(recs)
