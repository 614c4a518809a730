"""Quantile binning and one-hot encoding of numeric features.

A feature with ``m`` boundaries has ``m + 1`` bins.  A value lands in the
bin equal to the number of boundaries it is greater than or equal to, the
same ``>=`` convention the trees use for their right branch.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError, ParseError


@dataclass(frozen=True, eq=False)
class BinningSpec:
    boundaries: tuple  # one strictly increasing float64 array per feature
    requested_bins: int

    def __post_init__(self):
        bounds = []
        for f, b in enumerate(self.boundaries):
            b = np.array(b, dtype=np.float64)
            if b.ndim != 1 or not np.isfinite(b).all() or np.any(np.diff(b) <= 0):
                raise InputError(f"feature {f}: boundaries must be finite and strictly increasing")
            b.setflags(write=False)
            bounds.append(b)
        object.__setattr__(self, "boundaries", tuple(bounds))
        widths = np.array([len(b) + 1 for b in bounds], dtype=np.int64)
        offsets = np.concatenate([[0], np.cumsum(widths)[:-1]]).astype(np.int64)
        widths.setflags(write=False)
        offsets.setflags(write=False)
        object.__setattr__(self, "widths", widths)
        object.__setattr__(self, "offsets", offsets)

    @property
    def num_features(self) -> int:
        return len(self.boundaries)

    @property
    def total_onehot_width(self) -> int:
        return int(self.widths.sum())

    def to_dict(self) -> dict:
        return {"kind": "quantized_onehot", "requested_bins": self.requested_bins,
                "boundaries": [b.tolist() for b in self.boundaries]}

    @classmethod
    def from_dict(cls, doc) -> "BinningSpec":
        try:
            return cls(tuple(doc["boundaries"]), int(doc["requested_bins"]))
        except (KeyError, TypeError) as exc:
            raise ParseError(f"bad binning spec: {exc}", "encoding") from None

    def describe(self) -> list[dict]:
        """Per-feature listing used by the ``bins`` command."""
        return [{"feature": f, "boundaries": b.tolist()} for f, b in enumerate(self.boundaries)]


def fit_quantile_bins(column, requested_bins: int) -> np.ndarray:
    """Nearest-rank quantile boundaries at levels i/requested_bins.

    The value of rank ``ceil(i * n / requested_bins)`` of the sorted column is
    taken for i = 1 .. requested_bins - 1.  Duplicates collapse, and a boundary
    equal to the column minimum is dropped since it would leave bin 0 empty.
    """
    col = np.asarray(column, dtype=np.float64).ravel()
    if col.size == 0:
        raise InputError("cannot fit bins on an empty column")
    if not np.isfinite(col).all():
        raise InputError("column contains non-finite values")
    if requested_bins < 1:
        raise InputError(f"requested_bins must be >= 1, got {requested_bins}")
    s = np.sort(col, kind="stable")
    n = s.size
    i = np.arange(1, requested_bins, dtype=np.int64)
    ranks = (i * n + requested_bins - 1) // requested_bins
    cuts = np.unique(s[ranks - 1])
    return cuts[cuts > s[0]]


def fit_binning(features, requested_bins: int = 50) -> BinningSpec:
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise InputError(f"need a non-empty 2-D feature matrix, got shape {X.shape}")
    bounds = []
    for f in range(X.shape[1]):
        try:
            bounds.append(fit_quantile_bins(X[:, f], requested_bins))
        except InputError as exc:
            raise InputError(f"feature {f}: {exc}") from None
    return BinningSpec(tuple(bounds), requested_bins)


def _check(x, spec):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.ndim != 2 or X.shape[1] != spec.num_features:
        raise InputError(f"expected {spec.num_features} features, got shape {x.shape}")
    if not np.isfinite(X).all():
        raise InputError("non-finite feature value")
    return X, single


def quantize(x, spec: BinningSpec) -> np.ndarray:
    """Bin index per feature; accepts one vector or a row batch."""
    X, single = _check(x, spec)
    q = np.empty(X.shape, dtype=np.int64)
    for f, b in enumerate(spec.boundaries):
        q[:, f] = np.searchsorted(b, X[:, f], side="right")
    return q[0] if single else q


def _check_bins(q, spec):
    q = np.asarray(q)
    single = q.ndim == 1
    Q = q[None, :] if single else q
    if Q.ndim != 2 or Q.shape[1] != spec.num_features:
        raise InputError(f"expected {spec.num_features} bin indices, got shape {q.shape}")
    if not np.issubdtype(Q.dtype, np.integer):
        raise InputError("bin indices must be integers")
    bad = (Q < 0) | (Q >= spec.widths)
    if bad.any():
        r, f = np.argwhere(bad)[0]
        raise InputError(f"bin index {Q[r, f]} out of range for feature {f} "
                         f"(width {spec.widths[f]})")
    return Q.astype(np.int64), single


def onehot_rows(q, spec: BinningSpec) -> np.ndarray:
    """Column of the active one-hot entry for each feature: offset(f) + bin."""
    Q, single = _check_bins(q, spec)
    rows = Q + spec.offsets
    return rows[0] if single else rows


def one_hot_encode(q, spec: BinningSpec) -> np.ndarray:
    Q, single = _check_bins(q, spec)
    out = np.zeros((Q.shape[0], spec.total_onehot_width), dtype=np.float64)
    np.put_along_axis(out, Q + spec.offsets, 1.0, axis=1)
    return out[0] if single else out
