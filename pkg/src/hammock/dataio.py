"""CSV datasets, label mapping and train/test splits."""
from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import InputError, ParseError


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray  # (n_rows, n_features) float64
    labels: np.ndarray    # (n_rows,) int64 class indices
    class_names: tuple = ()
    feature_names: tuple | None = None

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        if X.ndim != 2 or y.shape != (X.shape[0],):
            raise InputError(f"features {X.shape} and labels {y.shape} do not line up")
        if not np.isfinite(X).all():
            raise InputError("dataset contains non-finite feature values")
        names = tuple(self.class_names) or tuple(str(c) for c in range(int(y.max(initial=-1)) + 1))
        if y.size and (y.min() < 0 or y.max() >= len(names)):
            raise InputError("label index outside the class table")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "class_names", names)

    @property
    def num_rows(self) -> int:
        return self.features.shape[0]

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def take(self, idx) -> "Dataset":
        return replace(self, features=self.features[idx], labels=self.labels[idx])


def _is_number(s):
    try:
        float(s)
    except ValueError:
        return False
    return True


def load_csv(path, delimiter=",", header=None, label_column=-1, class_names=None) -> Dataset:
    """Read a dense numeric CSV with one label column.

    Args:
        path: file to read (UTF-8).
        delimiter: field separator.
        header: True/False, or None to treat the first row as a header when
            any of its feature fields is non-numeric.
        label_column: column name (needs a header) or integer index; negative
            indices count from the end.
        class_names: an existing label table, e.g. from the training file.
            Labels are then mapped through it and unseen labels are an error.
            Otherwise labels are indexed in order of first appearance.
    """
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            rows = [(i + 1, r) for i, r in enumerate(csv.reader(fh, delimiter=delimiter))
                    if r and any(c.strip() for c in r)]
    except FileNotFoundError:
        raise InputError(f"no such file: {path}") from None
    if not rows:
        raise ParseError("file is empty", str(path))

    first = [c.strip() for c in rows[0][1]]
    if isinstance(label_column, str):
        if header is False:
            raise InputError("a label column name needs a header row")
        header = True
        if label_column not in first:
            raise ParseError(f"label column {label_column!r} not in header {first}",
                             f"{path}: line {rows[0][0]}")
        label_idx = first.index(label_column)
    else:
        label_idx = int(label_column)
        if label_idx < 0:
            label_idx += len(first)
        if not 0 <= label_idx < len(first):
            raise ParseError(f"label column {label_column} out of range for {len(first)} columns",
                             f"{path}: line {rows[0][0]}")
    if header is None:
        header = not all(_is_number(c) for j, c in enumerate(first) if j != label_idx)
    names = None
    if header:
        names = tuple(c for j, c in enumerate(first) if j != label_idx)
        rows = rows[1:]
    if not rows:
        raise ParseError("no data rows", str(path))

    ncol = len(first)
    feats = np.empty((len(rows), ncol - 1), dtype=np.float64)
    raw_labels = []
    for r, (lineno, fields) in enumerate(rows):
        if len(fields) != ncol:
            raise ParseError(f"expected {ncol} fields, found {len(fields)}", f"{path}: line {lineno}")
        k = 0
        for j, cell in enumerate(fields):
            cell = cell.strip()
            if j == label_idx:
                raw_labels.append(cell)
                continue
            try:
                v = float(cell)
            except ValueError:
                raise ParseError(f"cannot parse {cell!r} as a number (column {j})",
                                 f"{path}: line {lineno}") from None
            if not math.isfinite(v):
                raise ParseError(f"non-finite value {cell!r} (column {j})", f"{path}: line {lineno}")
            feats[r, k] = v
            k += 1

    if class_names is None:
        table = list(dict.fromkeys(raw_labels))
    else:
        table = list(class_names)
        unseen = sorted(set(raw_labels) - set(table))
        if unseen:
            raise InputError(f"{path}: labels not present in the training classes: {unseen}")
    index = {c: i for i, c in enumerate(table)}
    labels = np.array([index[c] for c in raw_labels], dtype=np.int64)
    return Dataset(feats, labels, tuple(table), names)


@dataclass(frozen=True)
class SplitSpec:
    """Either two pre-split files or a train fraction plus shuffle seed."""

    fraction: float | None = None
    seed: int = 0
    train_path: str | None = None
    test_path: str | None = None

    def __post_init__(self):
        if self.train_path is not None:
            if self.test_path is None:
                raise InputError("pre-split mode needs both train and test paths")
        elif self.fraction is None or not 0.0 < self.fraction < 1.0:
            raise InputError(f"split fraction must lie in (0, 1), got {self.fraction}")


def split(ds: Dataset | None, spec: SplitSpec, **csv_options):
    """Return ``(train, test)``.

    Fraction mode shuffles ``ds`` with ``spec.seed`` and keeps
    ``round(fraction * n)`` rows for training.  Pre-split mode ignores ``ds``
    and loads both files, the test file sharing the train file's classes.
    """
    if spec.train_path is not None:
        train = load_csv(spec.train_path, **csv_options)
        test = load_csv(spec.test_path, class_names=train.class_names, **csv_options)
        if test.num_features != train.num_features:
            raise InputError(f"train has {train.num_features} features, test {test.num_features}")
        return train, test
    n = ds.num_rows
    n_train = int(round(spec.fraction * n))
    if not 0 < n_train < n:
        raise InputError(f"fraction {spec.fraction} leaves an empty part for {n} rows")
    perm = np.random.default_rng(spec.seed).permutation(n)
    return ds.take(np.sort(perm[:n_train])), ds.take(np.sort(perm[n_train:]))


def label_stats(ds: Dataset) -> dict:
    counts = Counter(ds.labels.tolist())
    return {c: counts.get(c, 0) for c in range(ds.num_classes)}
