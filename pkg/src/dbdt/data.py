"""Tabular data loading and preparation.

CSV columns are encoded per their declared kind: nominal columns expand to
one indicator column per category, ordinal columns map to consecutive
naturals (1-based) along their stated ordering, numeric columns pass through
raw.  The binary target maps to {-1, +1} with the minority class on +1.
All functions are pure: they return new Dataset objects and take explicit
seeds, never touching global random state.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, replace

import numpy as np

VALID_KINDS = ("numeric", "ordinal", "nominal", "target")

# Floor for the per-column standard deviation; a constant column normalizes
# to all zeros instead of dividing by zero.
STD_FLOOR = 1e-12


class SchemaError(ValueError):
    """Schema, header, or configuration problem (CLI exit code 2)."""


class DataError(ValueError):
    """Malformed data content such as unknown categories or missing values."""


@dataclass(frozen=True)
class ColumnSpec:
    """Declared role of one raw CSV column."""

    name: str
    kind: str
    ordering: tuple[str, ...] | None = None
    categories: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.kind not in VALID_KINDS:
            raise SchemaError(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == "ordinal" and not self.ordering:
            raise SchemaError(f"ordinal column {self.name!r} needs an ordering")
        if self.kind == "nominal" and not self.categories:
            raise SchemaError(f"nominal column {self.name!r} needs a category list")


@dataclass
class Dataset:
    """Encoded feature matrix with labels in {-1, +1}.

    ``groups`` maps each original (pre-encoding) feature to the encoded
    column indices it produced; ``numeric_idx`` lists the encoded columns of
    numeric origin (the ones normalization touches)."""

    features: np.ndarray
    labels: np.ndarray
    feature_names: list[str]
    pos_ratio: float
    numeric_idx: tuple[int, ...] = ()
    groups: tuple[tuple[str, tuple[int, ...]], ...] = ()
    positive_value: str | None = None  # raw target value mapped to +1

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @staticmethod
    def from_arrays(
        features: np.ndarray,
        labels: np.ndarray,
        feature_names: list[str] | None = None,
        numeric_idx: tuple[int, ...] | None = None,
        groups: tuple[tuple[str, tuple[int, ...]], ...] | None = None,
    ) -> "Dataset":
        """Wrap an already-encoded matrix; by default every column is its own
        all-numeric feature group."""
        features = np.asarray(features, dtype=float)
        labels = np.asarray(labels, dtype=float)
        if set(np.unique(labels)) - {-1.0, 1.0}:
            raise DataError("labels must lie in {-1, +1}")
        if feature_names is None:
            feature_names = [f"x{i}" for i in range(features.shape[1])]
        if numeric_idx is None:
            numeric_idx = tuple(range(features.shape[1]))
        if groups is None:
            groups = tuple((name, (i,)) for i, name in enumerate(feature_names))
        return Dataset(
            features=features,
            labels=labels,
            feature_names=list(feature_names),
            pos_ratio=_pos_ratio(labels),
            numeric_idx=numeric_idx,
            groups=groups,
        )

    def subset(self, idx: np.ndarray) -> "Dataset":
        labels = self.labels[idx]
        return replace(
            self,
            features=self.features[idx],
            labels=labels,
            pos_ratio=_pos_ratio(labels),
        )


@dataclass
class NormalizationStats:
    """Per-numeric-column mean and population std fitted on a training split;
    ``feature_names`` echoes the fitted schema for mismatch detection."""

    column_idx: tuple[int, ...]
    mean: np.ndarray
    std: np.ndarray
    feature_names: tuple[str, ...]


def _pos_ratio(labels: np.ndarray) -> float:
    if labels.shape[0] == 0:
        return float("nan")
    return float(np.sum(labels == 1.0)) / labels.shape[0]


def schema_from_json(path) -> list[ColumnSpec]:
    """Read a schema file: a JSON list of objects with fields ``name``,
    ``kind`` and, as appropriate, ``ordering`` or ``categories``."""
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, list):
        raise SchemaError(f"{path}: schema must be a JSON list of column specs")
    specs = []
    for entry in raw:
        if not isinstance(entry, dict) or "name" not in entry or "kind" not in entry:
            raise SchemaError(f"{path}: every column spec needs 'name' and 'kind'")
        specs.append(ColumnSpec(
            name=entry["name"],
            kind=entry["kind"],
            ordering=tuple(entry["ordering"]) if entry.get("ordering") else None,
            categories=tuple(entry["categories"]) if entry.get("categories") else None,
        ))
    return specs


def schema_to_json(schema: list[ColumnSpec]) -> list[dict]:
    out = []
    for col in schema:
        entry = {"name": col.name, "kind": col.kind}
        if col.ordering is not None:
            entry["ordering"] = list(col.ordering)
        if col.categories is not None:
            entry["categories"] = list(col.categories)
        out.append(entry)
    return out


def load_csv(
    path,
    schema: list[ColumnSpec],
    delimiter: str = ",",
    positive_label: str | None = None,
    require_binary_target: bool = True,
) -> Dataset:
    """Load and encode a CSV file against a schema.

    The header must carry exactly the schema's column names (any order).
    The target column must take exactly two values; the minority value maps
    to +1 unless ``positive_label`` overrides the choice.  Prediction-time
    loading passes ``require_binary_target=False`` together with the stored
    positive label, which then defines the mapping completely (rows whose
    target differs map to -1) and permits empty or single-class files.
    """
    targets = [c for c in schema if c.kind == "target"]
    if len(targets) != 1:
        raise SchemaError(f"schema must declare exactly one target column, got {len(targets)}")
    target_col = targets[0]

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file, header row required") from None
        rows = list(reader)

    names = [c.name for c in schema]
    if sorted(header) != sorted(names):
        missing = sorted(set(names) - set(header))
        extra = sorted(set(header) - set(names))
        raise SchemaError(
            f"{path}: header does not match schema "
            f"(missing {missing or 'none'}, unexpected {extra or 'none'})"
        )
    col_of = {name: header.index(name) for name in names}

    raw_target = []
    encoded_cols: list[np.ndarray] = []
    feature_names: list[str] = []
    numeric_idx: list[int] = []
    groups: list[tuple[str, tuple[int, ...]]] = []

    n = len(rows)
    for row_no, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise DataError(f"{path} row {row_no}: expected {len(header)} fields, got {len(row)}")

    for col in schema:
        j = col_of[col.name]
        values = [rows[i][j] for i in range(n)]
        for i, v in enumerate(values):
            if v == "":
                raise DataError(f"{path} row {i + 2}: missing value in column {col.name!r}")
        if col.kind == "target":
            raw_target = values
            continue
        start = len(feature_names)
        if col.kind == "numeric":
            out = np.empty(n)
            for i, v in enumerate(values):
                try:
                    out[i] = float(v)
                except ValueError:
                    raise DataError(
                        f"{path} row {i + 2}: non-numeric value {v!r} in column {col.name!r}"
                    ) from None
            encoded_cols.append(out)
            feature_names.append(col.name)
            numeric_idx.append(start)
        elif col.kind == "ordinal":
            rank = {label: k + 1 for k, label in enumerate(col.ordering)}
            out = np.empty(n)
            for i, v in enumerate(values):
                if v not in rank:
                    raise DataError(
                        f"{path} row {i + 2}: unknown category {v!r} in ordinal column {col.name!r}"
                    )
                out[i] = rank[v]
            encoded_cols.append(out)
            feature_names.append(col.name)
        else:  # nominal
            index = {label: k for k, label in enumerate(col.categories)}
            block = np.zeros((n, len(col.categories)))
            for i, v in enumerate(values):
                if v not in index:
                    raise DataError(
                        f"{path} row {i + 2}: unknown category {v!r} in nominal column {col.name!r}"
                    )
                block[i, index[v]] = 1.0
            for k, label in enumerate(col.categories):
                encoded_cols.append(block[:, k])
                feature_names.append(f"{col.name}={label}")
        groups.append((col.name, tuple(range(start, len(feature_names)))))

    distinct = sorted(set(raw_target))
    if require_binary_target and len(distinct) != 2:
        raise DataError(
            f"{path}: non-binary target, column {target_col.name!r} has "
            f"{len(distinct)} distinct values {distinct[:5]}"
        )
    if positive_label is not None:
        if require_binary_target and positive_label not in distinct:
            raise SchemaError(
                f"positive label {positive_label!r} does not occur in column {target_col.name!r}"
            )
        pos_value = positive_label
    elif n == 0:
        raise DataError(f"{path}: no data rows and no explicit positive label")
    else:
        counts = {v: raw_target.count(v) for v in distinct}
        # minority class becomes +1; on an exact tie the lexicographically
        # larger value does
        pos_value = min(distinct, key=lambda v: (counts[v], -distinct.index(v)))
    labels = np.array([1.0 if v == pos_value else -1.0 for v in raw_target])

    features = (np.column_stack(encoded_cols) if n > 0
                else np.empty((0, len(feature_names))))
    return Dataset(
        features=features,
        labels=labels,
        feature_names=feature_names,
        pos_ratio=_pos_ratio(labels),
        numeric_idx=tuple(numeric_idx),
        groups=tuple(groups),
        positive_value=pos_value,
    )


def decode_nominal(ds: Dataset, group_name: str, row: int) -> str:
    """Recover the original category label of a one-hot block (encoding is
    lossless for categoricals)."""
    for name, idx in ds.groups:
        if name == group_name:
            block = ds.features[row, list(idx)]
            hot = np.flatnonzero(block == 1.0)
            if hot.size != 1:
                raise DataError(f"row {row}: indicator block of {group_name!r} is not one-hot")
            return ds.feature_names[idx[hot[0]]].split("=", 1)[1]
    raise KeyError(group_name)


def fit_normalize(train: Dataset) -> NormalizationStats:
    """Mean/std of the numeric columns of a training split (population std,
    floored at STD_FLOOR with a warning for constant columns)."""
    cols = list(train.numeric_idx)
    block = train.features[:, cols]
    mean = block.mean(axis=0)
    std = block.std(axis=0)
    low = std < STD_FLOOR
    if np.any(low):
        bad = [train.feature_names[cols[i]] for i in np.flatnonzero(low)]
        warnings.warn(f"constant numeric columns normalized to zero: {bad}")
        std = np.where(low, STD_FLOOR, std)
    return NormalizationStats(
        column_idx=tuple(cols),
        mean=mean,
        std=std,
        feature_names=tuple(train.feature_names),
    )


def apply_normalize(ds: Dataset, stats: NormalizationStats) -> Dataset:
    """Z-score the numeric columns with training statistics; indicator and
    ordinal columns pass through unchanged."""
    if tuple(ds.feature_names) != stats.feature_names:
        raise SchemaError("normalization stats were fitted on a different schema")
    features = ds.features.copy()
    cols = list(stats.column_idx)
    features[:, cols] = (features[:, cols] - stats.mean) / stats.std
    return replace(ds, features=features)


def split(ds: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Stratified train/test split: each class is split independently at the
    given fraction (rounded to nearest, at least one sample per class per
    side).  Returns (train, test); deterministic under the seed."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")
    rng = np.random.default_rng(seed)
    test_parts = []
    train_parts = []
    for cls in (1.0, -1.0):
        idx = np.flatnonzero(ds.labels == cls)
        if idx.size < 2:
            raise ValueError(f"class {int(cls):+d} has fewer than 2 samples")
        n_test = int(np.floor(idx.size * test_fraction + 0.5))
        n_test = min(max(n_test, 1), idx.size - 1)
        perm = rng.permutation(idx)
        test_parts.append(perm[:n_test])
        train_parts.append(perm[n_test:])
    test_idx = np.sort(np.concatenate(test_parts))
    train_idx = np.sort(np.concatenate(train_parts))
    return ds.subset(train_idx), ds.subset(test_idx)


def undersample_majority(ds: Dataset, target_pos_ratio: float, seed: int) -> Dataset:
    """Keep every minority (+1) sample and down-sample the majority without
    replacement so the positive ratio lands within one sample of the target."""
    if not 0.0 < target_pos_ratio < 1.0:
        raise ValueError("target_pos_ratio must be in (0, 1)")
    if target_pos_ratio < ds.pos_ratio - 1e-12:
        raise ValueError(
            f"target ratio {target_pos_ratio} below current ratio {ds.pos_ratio}; "
            "undersampling can only raise the minority share"
        )
    pos = np.flatnonzero(ds.labels == 1.0)
    neg = np.flatnonzero(ds.labels == -1.0)
    n_keep = int(np.floor(pos.size * (1.0 - target_pos_ratio) / target_pos_ratio + 0.5))
    n_keep = min(n_keep, neg.size)
    if n_keep < 1:
        raise ValueError("target ratio leaves no majority samples")
    rng = np.random.default_rng(seed)
    kept = rng.choice(neg, size=n_keep, replace=False)
    idx = np.sort(np.concatenate([pos, kept]))
    return ds.subset(idx)


def batch_iter(n: int, batch_size: int, seed: int, epoch: int):
    """Chunks of a seeded permutation of range(n); the last chunk may be
    short.  (seed, epoch) fully determines the sequence."""
    if batch_size < 2:
        raise ValueError("batch_size must be >= 2")
    rng = np.random.default_rng([seed, epoch])
    perm = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield perm[start: start + batch_size]
