"""Decision trees and additive tree ensembles.

Routing convention: ``x[feature] < threshold`` goes left, anything else
(including equality) goes right.  Missing values are not supported; every
evaluation entry point rejects non-finite input.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from .errors import (
    DanglingReferenceError,
    FeatureIndexError,
    InputError,
    MalformedJSONError,
    ParseError,
    TreeStructureError,
    UnknownTaskError,
)

LT = "LT"
GE = "GE"


class Task(str, Enum):
    REGRESSION = "regression"
    BINARY_LOGISTIC = "binary_logistic"
    MULTICLASS = "multiclass"


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DecisionTree:
    """A binary split tree stored as parallel node arrays.

    ``feature[i] == -1`` marks a leaf; ``left``/``right`` hold array positions
    (not document ids) and are -1 at leaves.  ``node_ids`` keeps the ids used
    in the source document so serialization is stable.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    node_ids: np.ndarray
    root: int = 0

    @classmethod
    def from_nodes(cls, nodes: Sequence[dict], num_features: int | None = None,
                   where: str = "tree") -> "DecisionTree":
        """Build and validate a tree from schema-style node dicts.

        Internal nodes carry ``feature/threshold/left/right``; leaves carry
        ``leaf``.  Node id 0 is the root.
        """
        if not isinstance(nodes, (list, tuple)) or not nodes:
            raise TreeStructureError("tree has no nodes", where)
        pos = {}
        for k, node in enumerate(nodes):
            if not isinstance(node, dict) or "id" not in node:
                raise TreeStructureError("node without an 'id'", f"{where}.nodes[{k}]")
            nid = node["id"]
            if not isinstance(nid, int) or isinstance(nid, bool):
                raise TreeStructureError(f"node id must be an integer, got {nid!r}",
                                         f"{where}.nodes[{k}]")
            if nid in pos:
                raise TreeStructureError("duplicate node id", f"{where}.nodes[id={nid}]")
            pos[nid] = k
        if 0 not in pos:
            raise TreeStructureError("missing root node (id 0)", where)

        n = len(nodes)
        feature = np.full(n, -1, dtype=np.int64)
        threshold = np.zeros(n, dtype=np.float64)
        left = np.full(n, -1, dtype=np.int64)
        right = np.full(n, -1, dtype=np.int64)
        value = np.zeros(n, dtype=np.float64)
        for k, node in enumerate(nodes):
            loc = f"{where}.nodes[id={node['id']}]"
            if "leaf" in node:
                v = _as_float(node["leaf"], "leaf", loc)
                value[k] = v
                continue
            for key in ("feature", "threshold", "left", "right"):
                if key not in node:
                    raise TreeStructureError(f"internal node lacks '{key}'", loc)
            f = node["feature"]
            if not isinstance(f, int) or isinstance(f, bool) or f < 0 or (
                    num_features is not None and f >= num_features):
                raise FeatureIndexError(
                    f"feature index {f!r} out of range for {num_features} features", loc)
            feature[k] = f
            threshold[k] = _as_float(node["threshold"], "threshold", loc)
            for key, arr in (("left", left), ("right", right)):
                child = node[key]
                if not isinstance(child, int) or isinstance(child, bool) or child not in pos:
                    raise DanglingReferenceError(f"{key} child id {child!r} does not exist", loc)
                arr[k] = pos[child]

        # every node reachable from the root exactly once
        seen = np.zeros(n, dtype=bool)
        stack = [pos[0]]
        while stack:
            k = stack.pop()
            if seen[k]:
                raise TreeStructureError("node reached twice (cycle or shared child)",
                                         f"{where}.nodes[id={nodes[k]['id']}]")
            seen[k] = True
            if feature[k] >= 0:
                stack.append(int(right[k]))
                stack.append(int(left[k]))
        if not seen.all():
            orphan = nodes[int(np.flatnonzero(~seen)[0])]["id"]
            raise TreeStructureError("node unreachable from root", f"{where}.nodes[id={orphan}]")

        ids = [node["id"] for node in nodes]
        return cls(_frozen(feature, np.int64), _frozen(threshold, np.float64),
                   _frozen(left, np.int64), _frozen(right, np.int64),
                   _frozen(value, np.float64), _frozen(ids, np.int64), root=pos[0])

    @property
    def num_nodes(self) -> int:
        return len(self.feature)

    @property
    def num_leaves(self) -> int:
        return int(np.count_nonzero(self.feature < 0))

    def depth(self) -> int:
        best = 0
        stack = [(self.root, 0)]
        while stack:
            k, d = stack.pop()
            if self.feature[k] < 0:
                best = max(best, d)
            else:
                stack.append((int(self.left[k]), d + 1))
                stack.append((int(self.right[k]), d + 1))
        return best

    def to_nodes(self) -> list[dict]:
        out = []
        for k in range(self.num_nodes):
            nid = int(self.node_ids[k])
            if self.feature[k] < 0:
                out.append({"id": nid, "leaf": float(self.value[k])})
            else:
                out.append({"id": nid, "feature": int(self.feature[k]),
                            "threshold": float(self.threshold[k]),
                            "left": int(self.node_ids[self.left[k]]),
                            "right": int(self.node_ids[self.right[k]])})
        return out


def _as_float(v, name, loc):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise TreeStructureError(f"{name} must be a number, got {v!r}", loc)
    v = float(v)
    if not math.isfinite(v):
        raise TreeStructureError(f"{name} must be finite", loc)
    return v


@dataclass(frozen=True, eq=False)
class TreeEnsemble:
    trees: tuple
    num_features: int
    base_score: float = 0.0
    task: Task = Task.REGRESSION
    num_classes: int = 1
    class_of_tree: tuple | None = None
    _flat: dict = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "trees", tuple(self.trees))
        object.__setattr__(self, "task", Task(self.task))
        if self.num_features < 1:
            raise InputError("num_features must be >= 1")
        if not self.trees:
            raise InputError("ensemble has no trees")
        if self.task is Task.MULTICLASS:
            if self.class_of_tree is None or len(self.class_of_tree) != len(self.trees):
                raise TreeStructureError("multiclass ensembles need one class per tree")
            if self.num_classes < 2:
                raise TreeStructureError("multiclass needs num_classes >= 2")
            cls = tuple(int(c) for c in self.class_of_tree)
            bad = [c for c in cls if not 0 <= c < self.num_classes]
            if bad:
                raise TreeStructureError(f"class index {bad[0]} outside [0, {self.num_classes})")
            object.__setattr__(self, "class_of_tree", cls)
        else:
            if self.class_of_tree is not None:
                raise TreeStructureError("class_of_tree is only valid for multiclass ensembles")
            object.__setattr__(self, "num_classes", 1)
        for t, tree in enumerate(self.trees):
            used = tree.feature[tree.feature >= 0]
            if used.size and used.max() >= self.num_features:
                raise FeatureIndexError(
                    f"feature index {int(used.max())} out of range for {self.num_features} features",
                    f"trees[{t}]")
        object.__setattr__(self, "_flat", self._flatten())

    @property
    def n_outputs(self) -> int:
        return self.num_classes if self.task is Task.MULTICLASS else 1

    def tree_class(self, t: int) -> int:
        return self.class_of_tree[t] if self.class_of_tree is not None else 0

    def _flatten(self):
        offsets = np.cumsum([0] + [t.num_nodes for t in self.trees])
        shift = lambda a, o: np.where(a >= 0, a + o, -1)  # noqa: E731
        cls = np.zeros((len(self.trees), self.n_outputs))
        for t in range(len(self.trees)):
            cls[t, self.tree_class(t)] = 1.0
        return {
            "feature": np.concatenate([t.feature for t in self.trees]),
            "threshold": np.concatenate([t.threshold for t in self.trees]),
            "left": np.concatenate([shift(t.left, o) for t, o in zip(self.trees, offsets)]),
            "right": np.concatenate([shift(t.right, o) for t, o in zip(self.trees, offsets)]),
            "value": np.concatenate([t.value for t in self.trees]),
            "roots": np.array([t.root + o for t, o in zip(self.trees, offsets)], dtype=np.int64),
            "class_matrix": cls,
            "base": np.full(self.n_outputs, float(self.base_score)),
        }


@dataclass(frozen=True)
class LeafPath:
    leaf_value: float
    conditions: tuple  # of (feature_index, threshold, LT|GE)
    tree_index: int = 0


@dataclass(frozen=True, eq=False)
class ThresholdSet:
    per_feature: tuple  # one sorted float64 array per feature

    def __getitem__(self, f):
        return self.per_feature[f]

    def __len__(self):
        return len(self.per_feature)

    @property
    def total(self) -> int:
        return sum(len(a) for a in self.per_feature)

    def as_dict(self) -> dict:
        return {f: a.tolist() for f, a in enumerate(self.per_feature)}


# --------------------------------------------------------------------------
# input checks
# --------------------------------------------------------------------------


def check_features(x, num_features: int) -> np.ndarray:
    """Coerce to a float64 matrix (n, num_features); reject bad shapes and NaN/inf."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != num_features:
        raise InputError(f"expected {num_features} features, got shape {np.shape(x)}")
    if not np.isfinite(x).all():
        bad = np.argwhere(~np.isfinite(x))[0]
        raise InputError(f"non-finite feature value at row {bad[0]}, column {bad[1]}")
    return np.ascontiguousarray(x)


# --------------------------------------------------------------------------
# evaluation
# --------------------------------------------------------------------------


def eval_tree(tree: DecisionTree, x) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise InputError(f"eval_tree takes one feature vector, got shape {x.shape}")
    used = tree.feature[tree.feature >= 0]
    if used.size and used.max() >= x.shape[0]:
        raise InputError(f"tree splits on feature {int(used.max())} but x has {x.shape[0]} entries")
    if not np.isfinite(x).all():
        raise InputError("non-finite feature value")
    k = tree.root
    while tree.feature[k] >= 0:
        k = tree.left[k] if x[tree.feature[k]] < tree.threshold[k] else tree.right[k]
    return float(tree.value[k])


def route(ens: TreeEnsemble, X) -> np.ndarray:
    """Global node index of the reached leaf for every (row, tree)."""
    X = check_features(X, ens.num_features)
    fl = ens._flat
    return kernels.route_leaves(fl["feature"], fl["threshold"], fl["left"], fl["right"],
                                fl["roots"], X)


def eval_ensemble(ens: TreeEnsemble, x) -> np.ndarray:
    """Raw additive scores; shape ``(n_outputs,)`` for one vector, ``(n, n_outputs)`` for a batch.

    Trees are summed in order onto ``base_score``, per class group.
    """
    single = np.ndim(x) == 1
    leaves = route(ens, x)
    values = ens._flat["value"][leaves]
    out = kernels.accumulate_rows(values, ens._flat["class_matrix"], ens._flat["base"])
    return out[0] if single else out


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softmax(z):
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def predict(ens: TreeEnsemble, x):
    """Apply the task's link: identity, sigmoid probability, or argmax class."""
    raw = eval_ensemble(ens, x)
    if ens.task is Task.REGRESSION:
        out = raw[..., 0]
    elif ens.task is Task.BINARY_LOGISTIC:
        out = sigmoid(raw[..., 0])
    else:
        out = np.argmax(softmax(raw), axis=-1)
    return out.item() if np.ndim(out) == 0 else out


# --------------------------------------------------------------------------
# introspection
# --------------------------------------------------------------------------


def enumerate_paths(tree: DecisionTree, tree_index: int = 0) -> list[LeafPath]:
    """One LeafPath per leaf, depth-first left-to-right, conditions root to leaf.

    A condition repeated further down the same path is kept once.
    """
    paths = []

    def walk(k, conds):
        if tree.feature[k] < 0:
            paths.append(LeafPath(float(tree.value[k]), tuple(conds), tree_index))
            return
        f, thr = int(tree.feature[k]), float(tree.threshold[k])
        for direction, child in ((LT, tree.left[k]), (GE, tree.right[k])):
            c = (f, thr, direction)
            walk(int(child), conds if c in conds else conds + [c])

    walk(tree.root, [])
    return paths


def collect_thresholds(ens: TreeEnsemble) -> ThresholdSet:
    feat = ens._flat["feature"]
    thr = ens._flat["threshold"]
    per = []
    for f in range(ens.num_features):
        a = np.unique(thr[feat == f])
        a.setflags(write=False)
        per.append(a)
    return ThresholdSet(tuple(per))


# --------------------------------------------------------------------------
# JSON
# --------------------------------------------------------------------------


def ensemble_to_dict(ens: TreeEnsemble) -> dict:
    doc = {"num_features": ens.num_features, "task": ens.task.value}
    if ens.task is Task.MULTICLASS:
        doc["num_classes"] = ens.num_classes
    doc["base_score"] = float(ens.base_score)
    trees = []
    for t, tree in enumerate(ens.trees):
        entry = {}
        if ens.task is Task.MULTICLASS:
            entry["class"] = ens.class_of_tree[t]
        entry["nodes"] = tree.to_nodes()
        trees.append(entry)
    doc["trees"] = trees
    return doc


def serialize_ensemble(ens: TreeEnsemble) -> str:
    return json.dumps(ensemble_to_dict(ens), indent=1)


def ensemble_from_dict(doc) -> TreeEnsemble:
    if not isinstance(doc, dict):
        raise MalformedJSONError("top level must be an object", "$")
    for key in ("num_features", "task", "trees"):
        if key not in doc:
            raise ParseError(f"missing required key '{key}'", "$")
    nf = doc["num_features"]
    if not isinstance(nf, int) or isinstance(nf, bool) or nf < 1:
        raise ParseError(f"num_features must be a positive integer, got {nf!r}", "$.num_features")
    try:
        task = Task(doc["task"])
    except ValueError:
        raise UnknownTaskError(f"unknown task {doc['task']!r}", "$.task") from None
    base = _as_float(doc.get("base_score", 0.0), "base_score", "$.base_score")
    trees_doc = doc["trees"]
    if not isinstance(trees_doc, list) or not trees_doc:
        raise TreeStructureError("'trees' must be a non-empty list", "$.trees")

    num_classes = 1
    if task is Task.MULTICLASS:
        num_classes = doc.get("num_classes")
        if not isinstance(num_classes, int) or num_classes < 2:
            raise ParseError(f"multiclass needs integer num_classes >= 2, got {num_classes!r}",
                             "$.num_classes")
    trees, classes = [], []
    for t, entry in enumerate(trees_doc):
        where = f"trees[{t}]"
        if not isinstance(entry, dict) or "nodes" not in entry:
            raise TreeStructureError("tree entry needs 'nodes'", where)
        if task is Task.MULTICLASS:
            c = entry.get("class")
            if not isinstance(c, int) or isinstance(c, bool) or not 0 <= c < num_classes:
                raise TreeStructureError(f"class {c!r} invalid for {num_classes} classes", where)
            classes.append(c)
        elif "class" in entry:
            raise TreeStructureError("'class' is only allowed for multiclass", where)
        trees.append(DecisionTree.from_nodes(entry["nodes"], nf, where))
    return TreeEnsemble(tuple(trees), nf, base, task, num_classes,
                        tuple(classes) if task is Task.MULTICLASS else None)


def parse_ensemble(text: str) -> TreeEnsemble:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedJSONError(exc.msg, f"line {exc.lineno} column {exc.colno}") from None
    return ensemble_from_dict(doc)


def load_ensemble(path) -> TreeEnsemble:
    return parse_ensemble(Path(path).read_text(encoding="utf-8"))


def save_ensemble(ens: TreeEnsemble, path) -> None:
    Path(path).write_text(serialize_ensemble(ens), encoding="utf-8")


# --------------------------------------------------------------------------
# random generator for property tests
# --------------------------------------------------------------------------


def random_ensemble(seed, num_features, num_trees, max_depth, task="regression",
                    num_classes=3, split_prob=0.85) -> TreeEnsemble:
    """Deterministic random ensemble.

    Roots always split (when ``max_depth >= 1``); deeper nodes split with
    ``split_prob``.  Thresholds are uniform on [0, 1), leaves on [-1, 1].
    Multiclass trees are assigned to classes round-robin.
    """
    if min(num_features, num_trees, max_depth) < 1:
        raise InputError("num_features, num_trees and max_depth must all be >= 1")
    task = Task(task)
    rng = np.random.default_rng(seed)
    trees = []
    for t in range(num_trees):
        nodes = []

        def grow(depth):
            nid = len(nodes)
            nodes.append(None)
            if depth < max_depth and (depth == 0 or rng.random() < split_prob):
                f = int(rng.integers(num_features))
                thr = float(rng.random())
                left = grow(depth + 1)
                right = grow(depth + 1)
                nodes[nid] = {"id": nid, "feature": f, "threshold": thr,
                              "left": left, "right": right}
            else:
                nodes[nid] = {"id": nid, "leaf": float(rng.uniform(-1.0, 1.0))}
            return nid

        grow(0)
        trees.append(DecisionTree.from_nodes(nodes, num_features, f"trees[{t}]"))
    base = float(rng.uniform(-1.0, 1.0))
    if task is Task.MULTICLASS:
        return TreeEnsemble(tuple(trees), num_features, base, task, num_classes,
                            tuple(t % num_classes for t in range(num_trees)))
    return TreeEnsemble(tuple(trees), num_features, base, task)
