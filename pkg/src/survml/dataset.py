"""Censored-data containers, CSV ingestion and the preprocessing recipe.

The recipe drops columns whose missing fraction reaches a threshold, adds a
Boolean ``<col>_missing`` indicator for every surviving column with gaps,
one-hot encodes nominal columns and fills the remaining gaps with the
training median (numeric) or mode (nominal).
"""

from __future__ import annotations

import csv
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    EmptyTable,
    IncompatibleSchema,
    MissingColumn,
    NonPositiveTime,
    ParseError,
)

MISSING_SUFFIX = "_missing"


@dataclass(frozen=True)
class Schema:
    """Column roles of a cohort table.

    ``event_labels`` lists the outcome values that count as an observed event
    (e.g. ``["MCI", "AD"]`` for a cognitively-normal baseline group). When
    ``labels`` is given, every outcome value must belong to it.
    """

    time: str = "time"
    outcome: str = "event"
    event_labels: tuple[str, ...] = ("1",)
    nominal: tuple[str, ...] = ()
    labels: tuple[str, ...] | None = None
    exclude: tuple[str, ...] = ()

    @classmethod
    def from_dict(cls, d: dict) -> "Schema":
        labels = d.get("labels")
        return cls(
            time=d.get("time", "time"),
            outcome=d.get("outcome", "event"),
            event_labels=tuple(str(v) for v in d.get("event_labels", ["1"])),
            nominal=tuple(d.get("nominal", ())),
            labels=None if labels is None else tuple(str(v) for v in labels),
            exclude=tuple(d.get("exclude", ())),
        )

    @classmethod
    def from_json(cls, path) -> "Schema":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        d = {
            "time": self.time,
            "outcome": self.outcome,
            "event_labels": list(self.event_labels),
            "nominal": list(self.nominal),
        }
        if self.labels is not None:
            d["labels"] = list(self.labels)
        if self.exclude:
            d["exclude"] = list(self.exclude)
        return d

    @property
    def roles(self) -> tuple[str, ...]:
        return (self.time, self.outcome) + tuple(self.exclude)


@dataclass(frozen=True, eq=False)
class RawTable:
    """Column-oriented table before preprocessing.

    Numeric columns are float arrays with NaN for missing cells; nominal and
    outcome columns are object arrays of strings with ``None`` for missing.
    """

    columns: dict
    schema: Schema

    @property
    def names(self) -> list[str]:
        return list(self.columns)

    @property
    def n_rows(self) -> int:
        return len(next(iter(self.columns.values()))) if self.columns else 0

    @property
    def shape(self) -> tuple[int, int]:
        return self.n_rows, len(self.columns)

    @property
    def feature_columns(self) -> list[str]:
        roles = set(self.schema.roles)
        return [c for c in self.columns if c not in roles]

    def is_nominal(self, name: str) -> bool:
        return name in self.schema.nominal

    def missing_mask(self, name: str) -> np.ndarray:
        col = self.columns[name]
        if col.dtype == object:
            return np.array([v is None for v in col], dtype=bool)
        return np.isnan(col)

    def take(self, rows) -> "RawTable":
        rows = np.asarray(rows)
        return RawTable({k: v[rows] for k, v in self.columns.items()}, self.schema)

    def replace(self, name: str, values) -> "RawTable":
        cols = dict(self.columns)
        cols[name] = values
        return RawTable(cols, self.schema)

    def event_indicator(self) -> np.ndarray:
        """Outcome mapped to 0/1 through ``schema.event_labels``."""
        out = self.columns[self.schema.outcome]
        if any(v is None for v in out):
            raise IncompatibleSchema(f"outcome column {self.schema.outcome!r} has missing cells")
        events = set(self.schema.event_labels)
        return np.array([v in events for v in out], dtype=np.int8)

    @classmethod
    def from_dataset(cls, ds: "SurvivalDataset") -> "RawTable":
        """Wrap a numeric dataset as a table with ``time``/``event`` role columns."""
        time_col, event_col = "time", "event"
        while time_col in ds.feature_names:
            time_col = "_" + time_col
        while event_col in ds.feature_names:
            event_col = "_" + event_col
        cols = {name: ds.features[:, j].copy() for j, name in enumerate(ds.feature_names)}
        cols[time_col] = ds.time.copy()
        cols[event_col] = np.array([str(int(e)) for e in ds.event], dtype=object)
        return cls(cols, Schema(time=time_col, outcome=event_col, event_labels=("1",)))


@dataclass(frozen=True, eq=False)
class SurvivalDataset:
    """Preprocessed covariates with observed time and event indicator."""

    features: np.ndarray
    feature_names: tuple
    time: np.ndarray
    event: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.features, dtype=float)
        t = np.asarray(self.time, dtype=float)
        e = np.asarray(self.event)
        if x.ndim != 2 or t.ndim != 1 or x.shape[0] != t.size or e.shape != t.shape:
            raise IncompatibleSchema(
                f"features {x.shape}, time {t.shape}, event {e.shape} are inconsistent"
            )
        if len(self.feature_names) != x.shape[1]:
            raise IncompatibleSchema("feature_names length differs from column count")
        if not np.all(np.isfinite(x)):
            raise IncompatibleSchema("features contain missing or non-finite values")
        if not np.all(np.isfinite(t)) or np.any(t <= 0):
            raise NonPositiveTime("all observed times must be finite and strictly positive")
        if not np.all((e == 0) | (e == 1)):
            raise IncompatibleSchema("event values must be 0 or 1")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "time", t)
        object.__setattr__(self, "event", e.astype(np.int8))

    @property
    def n(self) -> int:
        return self.time.size

    @property
    def p(self) -> int:
        return self.features.shape[1]

    def take(self, rows) -> "SurvivalDataset":
        rows = np.asarray(rows)
        return SurvivalDataset(
            self.features[rows], self.feature_names, self.time[rows], self.event[rows]
        )

    def equals(self, other: "SurvivalDataset") -> bool:
        return (
            self.feature_names == other.feature_names
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.time, other.time)
            and np.array_equal(self.event, other.event)
        )


def _parse_float(cell: str, lineno: int, name: str) -> float:
    try:
        value = float(cell)
    except ValueError:
        raise ParseError(f"line {lineno}, column {name!r}: non-numeric cell {cell!r}") from None
    if not math.isfinite(value):
        raise ParseError(f"line {lineno}, column {name!r}: non-finite cell {cell!r}")
    return value


def load_csv(path, schema: Schema, require_outcome: bool = True) -> RawTable:
    """Read a UTF-8 CSV with a header row; empty cells become missing.

    With ``require_outcome=False`` the time and outcome columns may be absent
    (feature-only files for prediction).
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyTable(f"{path}: no header row") from None
        rows = list(reader)

    if len(set(header)) != len(header):
        raise ParseError(f"{path}: duplicate column names in header")
    required = list(schema.nominal)
    if require_outcome:
        required += [schema.time, schema.outcome]
    for name in required:
        if name not in header:
            raise MissingColumn(f"{path}: declared column {name!r} not found")

    cells = {name: [] for name in header}
    for offset, row in enumerate(rows):
        if not row:
            continue
        if len(row) != len(header):
            raise ParseError(
                f"line {offset + 2}: expected {len(header)} cells, found {len(row)}"
            )
        for name, cell in zip(header, row):
            cells[name].append((offset + 2, cell))

    columns = {}
    for name in header:
        if name in schema.nominal or name == schema.outcome:
            values = [cell if cell != "" else None for _, cell in cells[name]]
            if name == schema.outcome and schema.labels is not None:
                allowed = set(schema.labels)
                for (lineno, _), v in zip(cells[name], values):
                    if v is not None and v not in allowed:
                        raise ParseError(
                            f"line {lineno}, column {name!r}: label {v!r} not in {sorted(allowed)}"
                        )
            col = np.empty(len(values), dtype=object)
            col[:] = values
        else:
            col = np.array(
                [np.nan if cell == "" else _parse_float(cell, ln, name) for ln, cell in cells[name]],
                dtype=float,
            )
            if name == schema.time and np.any(col < 0):
                lineno = cells[name][int(np.flatnonzero(col < 0)[0])][0]
                raise ParseError(f"line {lineno}, column {name!r}: negative time")
        columns[name] = col
    return RawTable(columns, schema)


@dataclass(frozen=True)
class PreprocessRecipe:
    """Column transformations learned from a training table."""

    source_columns: tuple
    nominal: tuple
    dropped_columns: tuple
    indicator_columns: tuple
    dummy_map: dict = field(hash=False)
    imputation_values: dict = field(hash=False)
    feature_names: tuple
    drop_threshold: float

    @property
    def kept_columns(self) -> tuple:
        dropped = set(self.dropped_columns)
        return tuple(c for c in self.source_columns if c not in dropped)

    def to_dict(self) -> dict:
        return {
            "source_columns": list(self.source_columns),
            "nominal": list(self.nominal),
            "dropped_columns": list(self.dropped_columns),
            "indicator_columns": list(self.indicator_columns),
            "dummy_map": {k: [list(p) for p in v] for k, v in self.dummy_map.items()},
            "imputation_values": dict(self.imputation_values),
            "feature_names": list(self.feature_names),
            "drop_threshold": self.drop_threshold,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PreprocessRecipe":
        return cls(
            source_columns=tuple(d["source_columns"]),
            nominal=tuple(d["nominal"]),
            dropped_columns=tuple(d["dropped_columns"]),
            indicator_columns=tuple(d["indicator_columns"]),
            dummy_map={k: tuple(tuple(p) for p in v) for k, v in d["dummy_map"].items()},
            imputation_values=dict(d["imputation_values"]),
            feature_names=tuple(d["feature_names"]),
            drop_threshold=float(d["drop_threshold"]),
        )


def _mode(values) -> str:
    counts = Counter(values)
    best = max(counts.values())
    return min(v for v, c in counts.items() if c == best)


def fit_preprocess(table: RawTable, drop_threshold: float = 0.9) -> PreprocessRecipe:
    """Learn the drop/indicator/dummy/imputation recipe from ``table`` alone."""
    if not 0 < drop_threshold <= 1:
        raise ValueError(f"drop_threshold must lie in (0, 1], got {drop_threshold}")
    n = table.n_rows
    if n < 2:
        raise EmptyTable(f"need at least 2 rows to fit preprocessing, got {n}")

    source = tuple(table.feature_columns)
    dropped, indicators, names = [], [], []
    dummy_map, fill = {}, {}
    for col in source:
        mask = table.missing_mask(col)
        if mask.sum() / n >= drop_threshold:
            dropped.append(col)
            continue
        observed = table.columns[col][~mask]
        if table.is_nominal(col):
            levels = sorted(set(observed))
            dummy_map[col] = tuple((lvl, f"{col}={lvl}") for lvl in levels)
            fill[col] = _mode(observed)
            names.extend(out for _, out in dummy_map[col])
        else:
            fill[col] = float(np.median(observed))
            names.append(col)
        if mask.any():
            indicators.append(col + MISSING_SUFFIX)
            names.append(col + MISSING_SUFFIX)

    return PreprocessRecipe(
        source_columns=source,
        nominal=tuple(c for c in source if table.is_nominal(c)),
        dropped_columns=tuple(dropped),
        indicator_columns=tuple(indicators),
        dummy_map=dummy_map,
        imputation_values=fill,
        feature_names=tuple(names),
        drop_threshold=drop_threshold,
    )


def transform_features(table: RawTable, recipe: PreprocessRecipe) -> np.ndarray:
    """Apply ``recipe`` to the covariate columns of ``table``; returns an n x p matrix."""
    indicators = set(recipe.indicator_columns)
    blocks = []
    for col in recipe.kept_columns:
        if col not in table.columns:
            raise IncompatibleSchema(f"column {col!r} required by the recipe is absent")
        nominal = col in recipe.dummy_map
        values = table.columns[col]
        if nominal != (values.dtype == object):
            kind = "nominal" if nominal else "numeric"
            raise IncompatibleSchema(f"column {col!r} must be {kind}")
        mask = table.missing_mask(col)
        if nominal:
            filled = np.where(mask, recipe.imputation_values[col], values)
            for level, _ in recipe.dummy_map[col]:
                blocks.append((filled == level).astype(float))
        else:
            blocks.append(np.where(mask, recipe.imputation_values[col], values).astype(float))
        if col + MISSING_SUFFIX in indicators:
            blocks.append(mask.astype(float))
    n = table.n_rows
    return np.column_stack(blocks) if blocks else np.empty((n, 0))


def apply_preprocess(table: RawTable, recipe: PreprocessRecipe) -> SurvivalDataset:
    """Produce a complete-case :class:`SurvivalDataset` from ``table``."""
    schema = table.schema
    for name in (schema.time, schema.outcome):
        if name not in table.columns:
            raise IncompatibleSchema(f"role column {name!r} is absent")
    time = table.columns[schema.time]
    if np.any(np.isnan(time)):
        raise IncompatibleSchema(f"time column {schema.time!r} has missing cells")
    if np.any(time <= 0):
        bad = int(np.flatnonzero(time <= 0)[0])
        raise NonPositiveTime(f"row {bad} has non-positive time {time[bad]}")
    features = transform_features(table, recipe)
    return SurvivalDataset(features, recipe.feature_names, time, table.event_indicator())


def write_csv(path, columns: dict) -> None:
    """Write equal-length columns; floats use ``repr`` so files round-trip exactly."""
    names = list(columns)
    n = len(columns[names[0]]) if names else 0

    def fmt(v):
        if v is None:
            return ""
        if isinstance(v, (float, np.floating)):
            return "" if np.isnan(v) else repr(float(v))
        if isinstance(v, (np.integer,)):
            return str(int(v))
        return str(v)

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(names)
        for i in range(n):
            writer.writerow([fmt(columns[c][i]) for c in names])
