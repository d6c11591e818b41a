"""Tabular IDS data: CSV ingestion, preprocessing, splits and synthetic demos.

Preprocessing follows the minimal recipe the detectors assume: mean imputation
for missing numerics, lexicographically-ordered one-hot encoding for
categoricals, then max-min scaling fitted once and applied to any table.
Out-of-range values at apply time are deliberately not clipped; clipping would
erase the anomaly signal one-class detectors rely on.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "COLUMN_KINDS",
    "Schema",
    "RawTable",
    "PreprocessorState",
    "Dataset",
    "SplitPlan",
    "load_schema",
    "load_csv",
    "extract_labels",
    "fit_preprocessor",
    "apply_preprocessor",
    "stratified_split",
    "filter_normal",
    "omit_attack_types",
    "generate_gaussian_demo",
    "generate_uniform_noise",
    "save_dataset_csv",
]

COLUMN_KINDS = ("numeric", "categorical", "binary-label", "attack-type-tag", "ignored")

DEFAULT_NORMAL_VALUES = frozenset({"0", "normal", "benign"})
DEFAULT_ATTACK_VALUES = frozenset({"1", "attack", "anomaly", "malicious"})

NOISE_TAG = "synthetic-noise"

# Demo geometry: one benign cluster, one attack cluster sitting between the
# benign cluster and a far attack cluster, all inside the unit square so the
# data needs no further scaling and uniform noise covers every cluster.
DEMO_CENTERS = {
    "normal": (0.20, 0.20),
    "a1": (0.38, 0.38),
    "a2": (0.80, 0.80),
}
DEMO_SIGMA = 0.03
DEMO_N_NORMAL = 600
DEMO_N_ATTACK = 200


@dataclass(frozen=True)
class Schema:
    """Ordered column names and kinds, plus the label vocabulary.

    Exactly one column must be the binary label; at most one may carry the
    attack-type tag. Label cell values are matched case-insensitively against
    normal_values / attack_values; attack_values may contain "*" to accept
    any value that is not a normal one (for label columns holding attack
    names, as in NSL-KDD).
    """

    columns: tuple[tuple[str, str], ...]
    normal_values: frozenset[str] = DEFAULT_NORMAL_VALUES
    attack_values: frozenset[str] = DEFAULT_ATTACK_VALUES

    def __post_init__(self) -> None:
        names = [name for name, _ in self.columns]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise ValueError(f"duplicate column names in schema: {dupes}")
        for name, kind in self.columns:
            if kind not in COLUMN_KINDS:
                raise ValueError(f"column {name!r} has unknown kind {kind!r}")
        labels = [n for n, k in self.columns if k == "binary-label"]
        if len(labels) != 1:
            raise ValueError(f"schema needs exactly one binary-label column, found {len(labels)}")
        tags = [n for n, k in self.columns if k == "attack-type-tag"]
        if len(tags) > 1:
            raise ValueError(f"schema allows at most one attack-type-tag column, found {len(tags)}")
        object.__setattr__(self, "normal_values", frozenset(v.lower() for v in self.normal_values))
        object.__setattr__(self, "attack_values", frozenset(v.lower() for v in self.attack_values))

    @property
    def label_column(self) -> str:
        return next(n for n, k in self.columns if k == "binary-label")

    @property
    def tag_column(self) -> str | None:
        return next((n for n, k in self.columns if k == "attack-type-tag"), None)

    @property
    def feature_columns(self) -> tuple[tuple[str, str], ...]:
        return tuple((n, k) for n, k in self.columns if k in ("numeric", "categorical"))


def load_schema(path: str | Path) -> Schema:
    """Read a schema from a JSON side file.

    Accepts either a flat mapping {column: kind} or an object with a
    "columns" mapping and an optional "label_values" override
    {"normal": [...], "attack": [...]}.
    """
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise ValueError(f"schema file {path} must contain a JSON object")
    if "columns" in raw:
        columns = raw["columns"]
        label_values = raw.get("label_values", {})
    else:
        columns = raw
        label_values = {}
    if not isinstance(columns, dict):
        raise ValueError("schema 'columns' must be a mapping of column name to kind")
    kwargs = {}
    if "normal" in label_values:
        kwargs["normal_values"] = frozenset(str(v) for v in label_values["normal"])
    if "attack" in label_values:
        kwargs["attack_values"] = frozenset(str(v) for v in label_values["attack"])
    return Schema(columns=tuple((str(n), str(k)) for n, k in columns.items()), **kwargs)


@dataclass(frozen=True)
class RawTable:
    """Parsed CSV contents; missing cells are None."""

    header: tuple[str, ...]
    rows: tuple[tuple[str | None, ...], ...]

    @property
    def row_count(self) -> int:
        return len(self.rows)

    @property
    def col_count(self) -> int:
        return len(self.header)

    def column(self, name: str) -> tuple[str | None, ...]:
        try:
            j = self.header.index(name)
        except ValueError:
            raise ValueError(f"table has no column {name!r}") from None
        return tuple(row[j] for row in self.rows)

    def subset(self, indices: Sequence[int]) -> RawTable:
        return RawTable(header=self.header, rows=tuple(self.rows[i] for i in indices))


def load_csv(path: str | Path, schema: Schema) -> RawTable:
    """Read an RFC-4180 CSV with a header row; empty cells become missing.

    Raises:
        ValueError: if a row's width differs from the header (the message
            names the 1-based line number) or the header does not match the
            schema's column set.
    """
    path = Path(path)
    schema_names = {name for name, _ in schema.columns}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: file is empty, expected a header row") from None
        unknown = [c for c in header if c not in schema_names]
        if unknown:
            raise ValueError(f"{path}: header has columns not in schema: {unknown}")
        missing = sorted(schema_names - set(header))
        if missing:
            raise ValueError(f"{path}: header is missing schema columns: {missing}")
        rows = []
        for lineno, cells in enumerate(reader, start=2):
            if len(cells) != len(header):
                raise ValueError(
                    f"{path}: line {lineno} has {len(cells)} cells, expected {len(header)}"
                )
            rows.append(tuple(cell if cell != "" else None for cell in cells))
    return RawTable(header=tuple(header), rows=tuple(rows))


@dataclass(frozen=True)
class PreprocessorState:
    """Fitted imputation means, category vocabularies and per-feature ranges."""

    imputation_means: dict[str, float]
    category_maps: dict[str, tuple[str, ...]]
    minmax: dict[str, tuple[float, float]]

    def __post_init__(self) -> None:
        for feat, (lo, hi) in self.minmax.items():
            if lo > hi:
                raise ValueError(f"feature {feat!r} has min {lo} > max {hi}")

    @property
    def feature_names(self) -> tuple[str, ...]:
        return tuple(self.minmax.keys())


@dataclass(frozen=True)
class Dataset:
    """Numeric feature matrix with binary labels and per-row attack-type tags.

    y is 0 for normal and 1 for attack; normal rows always carry an empty
    attack_type. Arrays are frozen after construction.
    """

    X: np.ndarray
    y: np.ndarray
    attack_type: tuple[str, ...]
    feature_names: tuple[str, ...]

    def __post_init__(self) -> None:
        X = np.array(self.X, dtype=np.float64)
        y = np.array(self.y, dtype=np.int64)
        if X.ndim != 2:
            raise ValueError(f"X must be 2-D, got shape {X.shape}")
        if y.shape != (X.shape[0],):
            raise ValueError(f"y has shape {y.shape}, expected ({X.shape[0]},)")
        if y.size and not np.isin(y, (0, 1)).all():
            raise ValueError("labels must be 0 (normal) or 1 (attack)")
        if len(self.attack_type) != X.shape[0]:
            raise ValueError("attack_type length must equal row count")
        if X.shape[1] != len(self.feature_names):
            raise ValueError("feature_names length must equal column count")
        for label, tag in zip(y, self.attack_type):
            if label == 0 and tag != "":
                raise ValueError("normal rows must have an empty attack_type")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "attack_type", tuple(self.attack_type))

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def subset(self, indices: Sequence[int]) -> Dataset:
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(
            X=self.X[idx],
            y=self.y[idx],
            attack_type=tuple(self.attack_type[i] for i in idx),
            feature_names=self.feature_names,
        )

    def attack_tags(self) -> tuple[str, ...]:
        """Distinct attack-type tags present, in first-appearance order."""
        seen: dict[str, None] = {}
        for label, tag in zip(self.y, self.attack_type):
            if label == 1 and tag not in seen:
                seen[tag] = None
        return tuple(seen)


@dataclass(frozen=True)
class SplitPlan:
    """Stratified split settings: train ratio, number of runs, base seed."""

    ratio: float = 0.8
    n_runs: int = 10
    base_seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.ratio < 1.0:
            raise ValueError(f"ratio must be in (0,1), got {self.ratio}")
        if self.n_runs < 1:
            raise ValueError(f"n_runs must be >= 1, got {self.n_runs}")


def _parse_numeric(cell: str, column: str, row_index: int) -> float:
    try:
        return float(cell)
    except ValueError:
        raise ValueError(
            f"column {column!r}, data row {row_index + 1}: cannot parse {cell!r} as a number"
        ) from None


def fit_preprocessor(table: RawTable, schema: Schema) -> PreprocessorState:
    """Fit imputation means, category vocabularies and max-min ranges.

    Means are computed over non-missing values only; categories are collected
    in lexicographic order; min/max are taken over the imputed, one-hot
    encoded matrix.

    Raises:
        ValueError: on an empty table, a fully-missing numeric column, or a
            schema with no feature columns.
    """
    if table.row_count == 0:
        raise ValueError("cannot fit a preprocessor on an empty table")
    features = schema.feature_columns
    if not features:
        raise ValueError("schema has no numeric or categorical feature columns")

    means: dict[str, float] = {}
    cats: dict[str, tuple[str, ...]] = {}
    for name, kind in features:
        col = table.column(name)
        if kind == "numeric":
            values = [
                _parse_numeric(c, name, i) for i, c in enumerate(col) if c is not None
            ]
            if not values:
                raise ValueError(f"numeric column {name!r} is entirely missing, cannot impute")
            means[name] = math.fsum(values) / len(values)
        else:
            cats[name] = tuple(sorted({c for c in col if c is not None}))

    X, names = _encode(table, schema, means, cats)
    minmax = {
        feat: (float(X[:, j].min()), float(X[:, j].max())) for j, feat in enumerate(names)
    }
    return PreprocessorState(imputation_means=means, category_maps=cats, minmax=minmax)


def _encode(
    table: RawTable,
    schema: Schema,
    means: dict[str, float],
    cats: dict[str, tuple[str, ...]],
) -> tuple[np.ndarray, tuple[str, ...]]:
    """Imputed, one-hot encoded (but unscaled) matrix plus output feature names."""
    blocks: list[np.ndarray] = []
    names: list[str] = []
    n = table.row_count
    for name, kind in schema.feature_columns:
        col = table.column(name)
        if kind == "numeric":
            mean = means[name]
            block = np.array(
                [mean if c is None else _parse_numeric(c, name, i) for i, c in enumerate(col)],
                dtype=np.float64,
            ).reshape(n, 1)
            names.append(name)
        else:
            vocab = cats[name]
            block = np.zeros((n, len(vocab)), dtype=np.float64)
            index = {v: j for j, v in enumerate(vocab)}
            for i, c in enumerate(col):
                j = index.get(c) if c is not None else None
                if j is not None:  # unseen or missing category stays all-zero
                    block[i, j] = 1.0
            names.extend(f"{name}={v}" for v in vocab)
        blocks.append(block)
    X = np.hstack(blocks) if blocks else np.zeros((n, 0))
    return X, tuple(names)


def extract_labels(table: RawTable, schema: Schema) -> tuple[np.ndarray, tuple[str, ...]]:
    """Binary labels and attack-type tags from the table's label/tag columns.

    Normal rows always get an empty tag, whatever the tag column holds. If a
    tag column exists, attack rows must have a non-empty tag; without one,
    attack rows are tagged with their raw label text, so a label column that
    carries attack names doubles as the tag source.
    """
    label_col = table.column(schema.label_column)
    wildcard_attack = "*" in schema.attack_values
    y = np.empty(table.row_count, dtype=np.int64)
    for i, cell in enumerate(label_col):
        if cell is None:
            raise ValueError(f"label column, data row {i + 1}: missing label value")
        v = cell.strip().lower()
        if v in schema.normal_values:
            y[i] = 0
        elif v in schema.attack_values or wildcard_attack:
            y[i] = 1
        else:
            raise ValueError(
                f"label column, data row {i + 1}: unrecognized label {cell!r} "
                f"(extend label_values in the schema file)"
            )
    tag_column = schema.tag_column
    if tag_column is None:
        tags = tuple(
            "" if label == 0 else cell.strip() for label, cell in zip(y, label_col)
        )
    else:
        raw_tags = table.column(tag_column)
        tags_list = []
        for i, (label, cell) in enumerate(zip(y, raw_tags)):
            if label == 0:
                tags_list.append("")
            else:
                if cell is None or cell.strip() == "":
                    raise ValueError(
                        f"attack-type column, data row {i + 1}: attack row has no tag"
                    )
                tags_list.append(cell.strip())
        tags = tuple(tags_list)
    return y, tags


def apply_preprocessor(state: PreprocessorState, table: RawTable, schema: Schema) -> Dataset:
    """Impute, encode and scale a table with a fitted state.

    Missing numerics take the fitted mean, unseen categories map to an
    all-zero block, scaling uses the fitted ranges without clipping, and
    constant features (min == max) map to 0.
    """
    X, names = _encode(table, schema, state.imputation_means, state.category_maps)
    if names != state.feature_names:
        raise ValueError("table columns do not match the schema/state used at fit time")
    lo = np.array([state.minmax[f][0] for f in names], dtype=np.float64)
    hi = np.array([state.minmax[f][1] for f in names], dtype=np.float64)
    span = hi - lo
    constant = span == 0
    span = np.where(constant, 1.0, span)
    X = (X - lo) / span
    if constant.any():
        X[:, constant] = 0.0
    y, tags = extract_labels(table, schema)
    return Dataset(X=X, y=y, attack_type=tags, feature_names=names)


def stratified_indices(
    y: np.ndarray, ratio: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Per-class seeded shuffle and prefix cut; returns (train, test) row indices."""
    train_parts = []
    test_parts = []
    for cls in (0, 1):
        idx = np.flatnonzero(y == cls)
        if idx.size < 2:
            raise ValueError(
                f"class {cls} has {idx.size} rows, need at least 2 to stratify"
            )
        perm = idx[rng.permutation(idx.size)]
        n_train = int(math.floor(ratio * idx.size + 1e-9))
        train_parts.append(perm[:n_train])
        test_parts.append(perm[n_train:])
    train = np.sort(np.concatenate(train_parts))
    test = np.sort(np.concatenate(test_parts))
    return train, test


def stratified_split(data: Dataset, plan: SplitPlan, run_index: int) -> tuple[Dataset, Dataset]:
    """Seeded, reproducible stratified partition for one run.

    The shuffle is seeded by (base_seed, run_index) only, so the same run
    always produces the same membership whatever else the caller does.
    """
    if not 0 <= run_index < plan.n_runs:
        raise ValueError(f"run_index {run_index} out of range 0..{plan.n_runs - 1}")
    rng = np.random.default_rng([plan.base_seed, run_index])
    train_idx, test_idx = stratified_indices(data.y, plan.ratio, rng)
    return data.subset(train_idx), data.subset(test_idx)


def filter_normal(data: Dataset) -> Dataset:
    """Rows with y == 0, order preserved.

    Raises:
        ValueError: if there are no normal rows to train on.
    """
    idx = np.flatnonzero(data.y == 0)
    if idx.size == 0:
        raise ValueError("no normal rows: one-class training needs benign data")
    return data.subset(idx)


def omit_attack_types(data: Dataset, combo: Iterable[str]) -> Dataset:
    """Remove every row whose attack_type is in combo; normal rows untouched.

    Raises:
        ValueError: if a tag in combo does not occur in the data.
    """
    combo_set = set(combo)
    present = set(data.attack_tags())
    unknown = sorted(combo_set - present)
    if unknown:
        raise ValueError(f"attack types not present in data: {unknown}")
    keep = [i for i, tag in enumerate(data.attack_type) if tag not in combo_set]
    return data.subset(keep)


def generate_gaussian_demo(
    seed: int,
    n_normal: int = DEMO_N_NORMAL,
    n_attack: int = DEMO_N_ATTACK,
    sigma: float = DEMO_SIGMA,
    centers: dict[str, tuple[float, float]] | None = None,
) -> Dataset:
    """Three well-separated 2-D Gaussian clusters inside the unit square.

    One cluster is benign; the two others are attack types "a1" (between the
    benign cluster and the far corner) and "a2" (the far corner). Centers sit
    at least six pooled standard deviations apart so cluster identity is
    unambiguous.
    """
    centers = dict(DEMO_CENTERS if centers is None else centers)
    rng = np.random.default_rng([seed, 0x6D0])
    parts = []
    labels = []
    tags: list[str] = []
    for name, center in centers.items():
        n = n_normal if name == "normal" else n_attack
        parts.append(rng.normal(loc=center, scale=sigma, size=(n, 2)))
        if name == "normal":
            labels.append(np.zeros(n, dtype=np.int64))
            tags.extend([""] * n)
        else:
            labels.append(np.ones(n, dtype=np.int64))
            tags.extend([name] * n)
    return Dataset(
        X=np.vstack(parts),
        y=np.concatenate(labels),
        attack_type=tuple(tags),
        feature_names=("x1", "x2"),
    )


def generate_uniform_noise(n: int, d: int, seed: int) -> Dataset:
    """n rows uniform on [0,1]^d, all labeled attack with the synthetic-noise tag."""
    if n < 1 or d < 1:
        raise ValueError(f"need n >= 1 and d >= 1, got n={n}, d={d}")
    rng = np.random.default_rng([seed, 0x401])
    return Dataset(
        X=rng.uniform(0.0, 1.0, size=(n, d)),
        y=np.ones(n, dtype=np.int64),
        attack_type=tuple([NOISE_TAG] * n),
        feature_names=tuple(f"f{j}" for j in range(d)),
    )


def save_dataset_csv(data: Dataset, csv_path: str | Path, manifest_path: str | Path | None = None) -> None:
    """Persist a preprocessed dataset as CSV plus a small JSON manifest."""
    csv_path = Path(csv_path)
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([*data.feature_names, "label", "attack_type"])
        for i in range(data.n_rows):
            writer.writerow(
                [*(repr(float(v)) for v in data.X[i]), int(data.y[i]), data.attack_type[i]]
            )
    if manifest_path is not None:
        manifest = {
            "feature_names": list(data.feature_names),
            "label_column": "label",
            "row_counts": {
                "total": data.n_rows,
                "normal": int(np.sum(data.y == 0)),
                "attack": int(np.sum(data.y == 1)),
            },
        }
        with open(manifest_path, "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
