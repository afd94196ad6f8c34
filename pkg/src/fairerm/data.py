"""Dataset container, CSV ingestion, synthetic benchmark generation, and fold splitting."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DataError",
    "Dataset",
    "ColumnSchema",
    "SplitPlan",
    "Standardizer",
    "load_csv",
    "write_csv",
    "generate_synthetic",
    "make_folds",
    "fit_standardizer",
]


class DataError(ValueError):
    """Raised for malformed input data; message carries row/column location."""


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Dataset:
    """Immutable sample triples: feature rows, labels in {-1,+1}, group indices.

    Group identifiers are stored as integer indices into ``group_names``;
    the index order is first appearance in the source.
    """

    features: np.ndarray
    labels: np.ndarray
    groups: np.ndarray
    group_names: tuple[str, ...]
    feature_names: tuple[str, ...] = ()

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim != 2:
            raise DataError("features must be a 2-d matrix")
        labels = np.asarray(self.labels, dtype=np.float64).ravel()
        groups = np.asarray(self.groups, dtype=np.int64).ravel()
        n = feats.shape[0]
        if n < 1:
            raise DataError("dataset must contain at least one row")
        if labels.shape[0] != n or groups.shape[0] != n:
            raise DataError(
                f"length mismatch: {n} feature rows, {labels.shape[0]} labels, "
                f"{groups.shape[0]} group entries"
            )
        if not np.all(np.isfinite(feats)):
            raise DataError("features contain non-finite entries")
        if not np.all(np.isin(labels, (-1.0, 1.0))):
            raise DataError("labels must be -1 or +1")
        names = tuple(self.group_names)
        if groups.size and (groups.min() < 0 or groups.max() >= len(names)):
            raise DataError("group index out of range of group_names")
        fnames = tuple(self.feature_names)
        if not fnames:
            fnames = tuple(f"f{j}" for j in range(feats.shape[1]))
        elif len(fnames) != feats.shape[1]:
            raise DataError("feature_names length does not match feature count")
        object.__setattr__(self, "features", _freeze(feats))
        object.__setattr__(self, "labels", _freeze(labels))
        object.__setattr__(self, "groups", _freeze(groups))
        object.__setattr__(self, "group_names", names)
        object.__setattr__(self, "feature_names", fnames)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def n_groups(self) -> int:
        return len(self.group_names)

    def positive_indices(self, group: int) -> np.ndarray:
        """Row indices with label +1 and the given group index."""
        return np.flatnonzero((self.labels > 0) & (self.groups == group))

    def positive_counts(self) -> dict[int, int]:
        return {g: int(self.positive_indices(g).size) for g in range(self.n_groups)}

    def with_features(self, features: np.ndarray,
                      feature_names: tuple[str, ...] | None = None) -> "Dataset":
        """Same rows with a replaced feature matrix (labels/groups preserved)."""
        return Dataset(features, self.labels, self.groups, self.group_names,
                       feature_names if feature_names is not None else ())

    def subset(self, indices: np.ndarray) -> "Dataset":
        return Dataset(self.features[indices], self.labels[indices],
                       self.groups[indices], self.group_names, self.feature_names)


@dataclass(frozen=True)
class ColumnSchema:
    """Column-role map for CSV ingestion."""

    label_col: str
    group_col: str
    feature_cols: tuple[str, ...] | None = None
    include_group_as_feature: bool = False


def load_csv(path, schema: ColumnSchema) -> Dataset:
    """Load a headered CSV into a Dataset.

    Labels given as 0/1 are mapped to -1/+1; group strings become integer
    indices in first-appearance order.  Feature column order is preserved.
    Missing values are a hard error; every problem is reported with its
    file line and column name.
    """
    try:
        fh = open(path, "r", newline="", encoding="utf-8")
    except FileNotFoundError:
        raise DataError(f"no such file: {path}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        cols = {name: j for j, name in enumerate(header)}
        if len(cols) != len(header):
            raise DataError(f"{path}: duplicate column names in header")
        for role, name in (("label", schema.label_col), ("group", schema.group_col)):
            if name not in cols:
                raise DataError(f"{path}: {role} column {name!r} not in header")
        if schema.feature_cols is not None:
            feat_names = list(schema.feature_cols)
            for name in feat_names:
                if name not in cols:
                    raise DataError(f"{path}: feature column {name!r} not in header")
        else:
            feat_names = [name for name in header
                          if name not in (schema.label_col, schema.group_col)]
        if not feat_names:
            raise DataError(f"{path}: no feature columns")

        feat_idx = [cols[name] for name in feat_names]
        label_idx = cols[schema.label_col]
        group_idx = cols[schema.group_col]

        rows, labels, groups = [], [], []
        group_map: dict[str, int] = {}
        for lineno, cells in enumerate(reader, start=2):
            if len(cells) != len(header):
                raise DataError(
                    f"{path}: line {lineno}: expected {len(header)} cells, got {len(cells)}")
            feat_row = np.empty(len(feat_idx))
            for k, j in enumerate(feat_idx):
                cell = cells[j]
                try:
                    value = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: line {lineno}, column {feat_names[k]!r}: "
                        f"non-numeric value {cell!r}") from None
                if not math.isfinite(value):
                    raise DataError(
                        f"{path}: line {lineno}, column {feat_names[k]!r}: "
                        f"non-finite value {cell!r}")
                feat_row[k] = value
            try:
                raw_label = float(cells[label_idx])
            except ValueError:
                raise DataError(
                    f"{path}: line {lineno}, column {schema.label_col!r}: "
                    f"non-numeric label {cells[label_idx]!r}") from None
            if raw_label not in (-1.0, 0.0, 1.0):
                raise DataError(
                    f"{path}: line {lineno}, column {schema.label_col!r}: "
                    f"label {cells[label_idx]!r} is outside {{-1, 0, +1}}")
            labels.append(1.0 if raw_label == 1.0 else -1.0)
            g = cells[group_idx]
            if g not in group_map:
                group_map[g] = len(group_map)
            groups.append(group_map[g])
            rows.append(feat_row)

        if not rows:
            raise DataError(f"{path}: no data rows")

    features = np.vstack(rows)
    if schema.include_group_as_feature:
        features = np.hstack([features, np.asarray(groups, dtype=np.float64)[:, None]])
        feat_names = feat_names + [schema.group_col]
    return Dataset(features, labels, groups,
                   tuple(group_map), tuple(feat_names))


def write_csv(data: Dataset, path, label_col: str = "label",
              group_col: str = "group") -> None:
    """Write a Dataset to CSV with 17-significant-digit floats (lossless for float64)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(data.feature_names) + [label_col, group_col])
        for i in range(data.n):
            row = [f"{x:.17g}" for x in data.features[i]]
            row.append(f"{int(data.labels[i]):d}")
            row.append(data.group_names[data.groups[i]])
            writer.writerow(row)


# Synthetic benchmark: four isotropic Gaussian clusters, two groups.
# (group, label, mean, variance, base count per split)
_SYNTH_CLUSTERS = (
    ("a", 1.0, (-1.0, -1.0), 0.8, 1000),
    ("a", -1.0, (1.0, 1.0), 0.8, 1000),
    ("b", 1.0, (0.5, -0.5), 0.5, 200),
    ("b", -1.0, (0.5, 0.5), 0.5, 1000),
)


def _gaussian_pairs(rng: np.random.Generator, count: int) -> np.ndarray:
    # Box-Muller transform: each uniform pair yields one 2-d standard normal row.
    u1 = 1.0 - rng.random(count)  # (0, 1]: keeps log() finite
    u2 = rng.random(count)
    r = np.sqrt(-2.0 * np.log(u1))
    return np.column_stack((r * np.cos(2.0 * np.pi * u2),
                            r * np.sin(2.0 * np.pi * u2)))


def generate_synthetic(seed: int, scale: float = 1.0) -> tuple[Dataset, Dataset]:
    """Generate the two-group Gaussian benchmark (train, test).

    Each split holds four clusters: group a with labels +1/-1 centered at
    (-1,-1) and (1,1) with variance 0.8 and 1000*scale points each, and
    group b with labels +1/-1 centered at (0.5,-0.5) and (0.5,0.5) with
    variance 0.5 and 200*scale / 1000*scale points.  Cluster counts are
    rounded, with a floor of one point per cluster.

    Sampling is a pure function of (seed, scale): one Philox counter-based
    stream drives a Box-Muller transform, consuming clusters in a fixed
    order (train split first, then test).
    """
    if not scale > 0:
        raise ValueError("scale must be positive")
    rng = np.random.Generator(np.random.Philox(seed))
    group_names = ("a", "b")
    splits = []
    for _ in range(2):
        blocks, labels, groups = [], [], []
        for gname, label, mean, var, base in _SYNTH_CLUSTERS:
            count = max(1, round(base * scale))
            pts = np.asarray(mean) + math.sqrt(var) * _gaussian_pairs(rng, count)
            blocks.append(pts)
            labels.append(np.full(count, label))
            groups.append(np.full(count, group_names.index(gname)))
        splits.append(Dataset(np.vstack(blocks), np.concatenate(labels),
                              np.concatenate(groups), group_names, ("x0", "x1")))
    return splits[0], splits[1]


@dataclass(frozen=True)
class SplitPlan:
    """Deterministic fold assignment: fold sizes differ by at most one."""

    fold_count: int
    seed: int
    assignment: np.ndarray

    def __post_init__(self):
        assignment = np.asarray(self.assignment, dtype=np.int64)
        if self.fold_count < 2:
            raise ValueError("fold_count must be at least 2")
        if assignment.min() < 0 or assignment.max() >= self.fold_count:
            raise ValueError("fold index out of range")
        sizes = np.bincount(assignment, minlength=self.fold_count)
        if sizes.max() - sizes.min() > 1:
            raise ValueError("fold sizes differ by more than one")
        object.__setattr__(self, "assignment", _freeze(assignment))

    @property
    def n(self) -> int:
        return self.assignment.shape[0]

    def fold_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == fold)

    def complement_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignment != fold)


def make_folds(n: int, fold_count: int, seed: int) -> SplitPlan:
    """Shuffled balanced partition of [0, n) into fold_count folds."""
    if fold_count < 2:
        raise ValueError("fold_count must be at least 2")
    if n < fold_count:
        raise ValueError(f"cannot split {n} rows into {fold_count} folds")
    perm = np.random.Generator(np.random.Philox(seed)).permutation(n)
    assignment = np.empty(n, dtype=np.int64)
    assignment[perm] = np.arange(n) % fold_count
    return SplitPlan(fold_count, seed, assignment)


@dataclass(frozen=True)
class Standardizer:
    """Per-feature affine map (x - mean) / scale fitted on training data."""

    mean: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", _freeze(np.asarray(self.mean, dtype=np.float64)))
        object.__setattr__(self, "scale", _freeze(np.asarray(self.scale, dtype=np.float64)))

    def transform(self, features: np.ndarray) -> np.ndarray:
        features = np.asarray(features, dtype=np.float64)
        if features.shape[1] != self.mean.shape[0]:
            raise DataError(
                f"standardizer fitted on {self.mean.shape[0]} features, "
                f"got {features.shape[1]}")
        return (features - self.mean) / self.scale

    def apply(self, data: Dataset) -> Dataset:
        return data.with_features(self.transform(data.features), data.feature_names)

    def to_json_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_json_dict(cls, doc: dict) -> "Standardizer":
        return cls(np.asarray(doc["mean"]), np.asarray(doc["scale"]))


def fit_standardizer(train: Dataset) -> Standardizer:
    """Zero-mean unit-variance scaler; constant columns keep scale 1."""
    mean = train.features.mean(axis=0)
    std = train.features.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    return Standardizer(mean, std)
