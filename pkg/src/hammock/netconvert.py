"""Compile a tree ensemble into an exactly equivalent step network.

The network has three parts:

* an indicator transform that expands ``x`` into complementary
  ``x[f] < t`` / ``x[f] >= t`` columns for every threshold in the ensemble,
* one hidden step unit per leaf whose binary weights select the conditions
  on that leaf's root path, with bias ``-(path_length - epsilon)``,
* an output layer carrying each leaf's value to its tree's class output, with
  the base score as bias.

Indicator sums are integers, so a unit's pre-activation is
``epsilon - (number of unmet conditions)`` and it fires exactly when every
condition holds, for any ``0 < epsilon < 1``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import InputError, ParseError
from .trees import GE, LT, Task, ThresholdSet, TreeEnsemble, check_features, collect_thresholds
from .trees import enumerate_paths, eval_ensemble

FORMAT_VERSION = 1


def _ro(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class IndicatorTransform:
    num_features: int
    feature: np.ndarray    # (width,) int64
    threshold: np.ndarray  # (width,) float64
    direction: tuple       # LT / GE per column, in adjacent pairs

    @property
    def width(self) -> int:
        return len(self.feature)

    def columns(self) -> list[tuple]:
        return [(int(f), float(t), d) for f, t, d in zip(self.feature, self.threshold, self.direction)]


def build_indicator_transform(ts: ThresholdSet) -> IndicatorTransform:
    """Columns ordered by feature, then threshold, LT before GE."""
    feat, thr, dirs = [], [], []
    for f in range(len(ts)):
        for t in ts[f]:
            feat += [f, f]
            thr += [float(t), float(t)]
            dirs += [LT, GE]
    return IndicatorTransform(len(ts), _ro(np.array(feat, dtype=np.int64)),
                              _ro(np.array(thr, dtype=np.float64)), tuple(dirs))


def apply_transform(t: IndicatorTransform, x) -> np.ndarray:
    single = np.ndim(x) == 1
    X = check_features(x, t.num_features)
    vals = X[:, t.feature]
    ge = vals >= t.threshold
    is_ge = np.array([d == GE for d in t.direction], dtype=bool)
    out = np.where(is_ge, ge, ~ge).astype(np.float64)
    return out[0] if single else out


@dataclass(frozen=True, eq=False)
class StepNetwork:
    transform: IndicatorTransform
    W1: np.ndarray  # (indicator columns, hidden)
    b1: np.ndarray
    W2: np.ndarray  # (hidden, outputs)
    b2: np.ndarray
    epsilon: float
    tree_of_node: np.ndarray
    task: Task = Task.REGRESSION

    @property
    def num_hidden(self) -> int:
        return self.W1.shape[1]

    @property
    def num_features(self) -> int:
        return self.transform.num_features

    def to_dict(self) -> dict:
        link = {Task.REGRESSION: "identity", Task.BINARY_LOGISTIC: "sigmoid",
                Task.MULTICLASS: "softmax"}[self.task]
        return {
            "format_version": FORMAT_VERSION,
            "encoding": {"kind": "indicator", "num_features": self.num_features,
                         "columns": [list(c) for c in self.transform.columns()]},
            "layers": [
                _layer_dict(self.W1, self.b1, "step"),
                _layer_dict(self.W2, self.b2, "identity"),
            ],
            "output_link": link,
            "metadata": {"epsilon": self.epsilon, "task": self.task.value,
                         "tree_of_node": self.tree_of_node.tolist()},
        }

    @classmethod
    def from_dict(cls, doc) -> "StepNetwork":
        try:
            enc = doc["encoding"]
            cols = enc["columns"]
            transform = IndicatorTransform(
                int(enc["num_features"]),
                _ro(np.array([c[0] for c in cols], dtype=np.int64)),
                _ro(np.array([c[1] for c in cols], dtype=np.float64)),
                tuple(str(c[2]) for c in cols))
            l1, l2 = doc["layers"]
            W1, b1 = _layer_arrays(l1)
            W2, b2 = _layer_arrays(l2)
            meta = doc["metadata"]
            return cls(transform, W1, b1, W2, b2, float(meta["epsilon"]),
                       _ro(np.array(meta["tree_of_node"], dtype=np.int64)), Task(meta["task"]))
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise ParseError(f"malformed step network: {exc!r}", "network") from None


def _layer_dict(W, b, activation):
    return {"rows": int(W.shape[0]), "cols": int(W.shape[1]),
            "weights": W.ravel().tolist(), "bias": b.tolist(), "activation": activation}


def _layer_arrays(layer):
    rows, cols = int(layer["rows"]), int(layer["cols"])
    W = np.array(layer["weights"], dtype=np.float64)
    b = np.array(layer["bias"], dtype=np.float64)
    if W.size != rows * cols or b.shape != (cols,):
        raise ParseError(f"layer of shape {rows}x{cols} has {W.size} weights and "
                         f"{b.size} biases", "layers")
    return _ro(W.reshape(rows, cols)), _ro(b)


def convert_ensemble(ens: TreeEnsemble, epsilon: float = 0.1) -> StepNetwork:
    """Hidden nodes follow tree order, then depth-first leaf order."""
    if not 0.0 < epsilon < 1.0:
        raise InputError(f"epsilon must lie in (0, 1), got {epsilon}")
    transform = build_indicator_transform(collect_thresholds(ens))
    col_of = {c: j for j, c in enumerate(transform.columns())}
    paths = [p for t, tree in enumerate(ens.trees) for p in enumerate_paths(tree, t)]
    n_hidden, n_out = len(paths), ens.n_outputs
    W1 = np.zeros((transform.width, n_hidden))
    b1 = np.empty(n_hidden)
    W2 = np.zeros((n_hidden, n_out))
    for i, p in enumerate(paths):
        for cond in p.conditions:
            W1[col_of[cond], i] = 1.0
        b1[i] = -(len(p.conditions) - epsilon)
        W2[i, ens.tree_class(p.tree_index)] = p.leaf_value
    b2 = np.full(n_out, float(ens.base_score))
    tree_of_node = np.array([p.tree_index for p in paths], dtype=np.int64)
    return StepNetwork(transform, _ro(W1), _ro(b1), _ro(W2), _ro(b2), float(epsilon),
                       _ro(tree_of_node), ens.task)


def hidden_activations(net: StepNetwork, x) -> np.ndarray:
    A = apply_transform(net.transform, np.atleast_2d(x))
    z = A @ net.W1 + net.b1
    return (z > 0).astype(np.float64)


def forward_step(net: StepNetwork, x) -> np.ndarray:
    """Raw scores of the step network, same shapes as ``eval_ensemble``."""
    single = np.ndim(x) == 1
    H = hidden_activations(net, x)
    out = kernels.accumulate_rows(H, net.W2, net.b2)
    return out[0] if single else out


@dataclass
class EquivalenceReport:
    max_abs_diff: float
    num_mismatches: int
    inputs_checked: int
    firing_violations: int

    @property
    def ok(self) -> bool:
        return self.num_mismatches == 0 and self.firing_violations == 0

    def to_dict(self) -> dict:
        return {"max_abs_diff": self.max_abs_diff, "num_mismatches": self.num_mismatches,
                "inputs_checked": self.inputs_checked,
                "firing_violations": self.firing_violations}


def verify_equivalence(ens: TreeEnsemble, net: StepNetwork, inputs, tol: float = 1e-9,
                       chunk: int = 4096) -> EquivalenceReport:
    """Compare ensemble and network scores input by input.

    ``firing_violations`` counts (input, tree) pairs where the tree's hidden
    nodes did not fire exactly once.  Mismatches are reported, never raised.
    """
    X = np.asarray(inputs, dtype=np.float64)
    if X.size == 0:
        return EquivalenceReport(0.0, 0, 0, 0)
    X = check_features(X, ens.num_features)
    if net.num_features != ens.num_features:
        raise InputError(f"network expects {net.num_features} features, "
                         f"ensemble has {ens.num_features}")
    n_trees = len(ens.trees)
    owner = np.zeros((net.num_hidden, n_trees))
    owner[np.arange(net.num_hidden), net.tree_of_node] = 1.0
    max_diff, mismatches, violations = 0.0, 0, 0
    for start in range(0, X.shape[0], chunk):
        xb = X[start:start + chunk]
        ref = eval_ensemble(ens, xb)
        H = hidden_activations(net, xb)
        got = kernels.accumulate_rows(H, net.W2, net.b2)
        if got.shape != ref.shape:
            raise InputError(f"network has {got.shape[1]} outputs, ensemble {ref.shape[1]}")
        diff = np.abs(got - ref).max(axis=1)
        max_diff = max(max_diff, float(diff.max()))
        mismatches += int(np.count_nonzero(~(diff <= tol)))
        fired = H @ owner
        violations += int(np.count_nonzero(fired != 1.0))
    return EquivalenceReport(max_diff, mismatches, X.shape[0], violations)
