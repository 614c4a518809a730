import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hammock.errors import (DanglingReferenceError, FeatureIndexError, InputError,
                            MalformedJSONError, TreeStructureError, UnknownTaskError)
from hammock.trees import (GE, LT, DecisionTree, TreeEnsemble, Task, collect_thresholds,
                           ensemble_from_dict, enumerate_paths, eval_ensemble, eval_tree,
                           parse_ensemble, predict, random_ensemble, serialize_ensemble)


def _satisfied(cond, x):
    f, thr, d = cond
    return x[f] < thr if d == LT else x[f] >= thr


class TestEvalTree:
    def test_first_rule(self, example_tree):
        assert eval_tree(example_tree, [0.2, 0.1]) == 1.3

    def test_second_rule(self, example_tree):
        assert eval_tree(example_tree, [0.2, 0.9]) == -0.5

    @pytest.mark.parametrize("f2", [-100.0, 0.0, 0.3, 7.0])
    def test_boundary_routes_right(self, example_tree, f2):
        assert eval_tree(example_tree, [0.5, f2]) == 0.4

    def test_rejects_short_vector(self, example_tree):
        with pytest.raises(InputError):
            eval_tree(example_tree, [0.2])

    @pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
    def test_rejects_non_finite(self, example_tree, bad):
        with pytest.raises(InputError):
            eval_tree(example_tree, [0.2, bad])


class TestEvalEnsemble:
    def test_single_tree(self, example_ensemble):
        np.testing.assert_array_equal(eval_ensemble(example_ensemble, [0.2, 0.1]), [1.3])

    def test_two_copies_plus_base(self, example_tree):
        ens = TreeEnsemble((example_tree, example_tree), 2, base_score=0.5)
        assert eval_ensemble(ens, [0.2, 0.1])[0] == pytest.approx(3.1, abs=1e-15)
        assert eval_ensemble(ens, [0.2, 0.1])[0] == 0.5 + 1.3 + 1.3

    def test_multiclass_groups(self, example_tree):
        leaf = DecisionTree.from_nodes([{"id": 0, "leaf": 0.0}], 2)
        ens = TreeEnsemble((example_tree, leaf), 2, 0.0, Task.MULTICLASS, 2, (0, 1))
        np.testing.assert_array_equal(eval_ensemble(ens, [0.9, 0.0]), [0.4, 0.0])
        assert predict(ens, [0.9, 0.0]) == 0

    def test_batch_matches_rows(self):
        ens = random_ensemble(3, 4, 8, 4, "multiclass")
        X = np.random.default_rng(0).random((25, 4))
        batch = eval_ensemble(ens, X)
        for i in range(25):
            np.testing.assert_array_equal(batch[i], eval_ensemble(ens, X[i]))

    def test_dimension_mismatch(self, example_ensemble):
        with pytest.raises(InputError):
            eval_ensemble(example_ensemble, [0.1, 0.2, 0.3])

    def test_non_finite(self, example_ensemble):
        with pytest.raises(InputError):
            eval_ensemble(example_ensemble, [[0.1, 0.2], [np.nan, 0.0]])


class TestPredict:
    def test_regression_identity(self, example_ensemble):
        assert predict(example_ensemble, [0.2, 0.1]) == 1.3

    def test_binary_logistic_at_zero(self):
        leaf = DecisionTree.from_nodes([{"id": 0, "leaf": 0.0}], 1)
        ens = TreeEnsemble((leaf,), 1, 0.0, Task.BINARY_LOGISTIC)
        assert predict(ens, [3.0]) == 0.5

    def test_argmax_tie_goes_low(self):
        leaf = DecisionTree.from_nodes([{"id": 0, "leaf": 0.25}], 1)
        ens = TreeEnsemble((leaf, leaf, leaf), 1, 0.0, Task.MULTICLASS, 3, (2, 1, 0))
        assert predict(ens, [0.0]) == 0


class TestEnumeratePaths:
    def test_example_rules(self, example_tree):
        paths = enumerate_paths(example_tree)
        assert [(p.conditions, p.leaf_value) for p in paths] == [
            (((0, 0.5, LT), (1, 0.3, LT)), 1.3),
            (((0, 0.5, LT), (1, 0.3, GE)), -0.5),
            (((0, 0.5, GE),), 0.4),
        ]

    def test_single_leaf(self):
        tree = DecisionTree.from_nodes([{"id": 0, "leaf": 2.5}])
        [p] = enumerate_paths(tree)
        assert p.conditions == () and p.leaf_value == 2.5

    @pytest.mark.parametrize("depth", [1, 2, 3, 5])
    def test_complete_tree_counts(self, depth):
        rng = np.random.default_rng(depth)
        nodes = []
        for i in range(2 ** (depth + 1) - 1):
            if i < 2 ** depth - 1:
                nodes.append({"id": i, "feature": int(rng.integers(3)),
                              "threshold": float(rng.random()), "left": 2 * i + 1,
                              "right": 2 * i + 2})
            else:
                nodes.append({"id": i, "leaf": float(i)})
        paths = enumerate_paths(DecisionTree.from_nodes(nodes, 3))
        # brute-force traversal count: every leaf id appears once
        assert sorted(p.leaf_value for p in paths) == [float(i) for i in range(2 ** depth - 1, len(nodes))]
        assert len(paths) == 2 ** depth
        assert all(len(p.conditions) == depth for p in paths)

    def test_repeated_condition_kept_once(self):
        nodes = [{"id": 0, "feature": 0, "threshold": 0.5, "left": 1, "right": 2},
                 {"id": 1, "feature": 0, "threshold": 0.5, "left": 3, "right": 4},
                 {"id": 2, "leaf": 1.0}, {"id": 3, "leaf": 2.0}, {"id": 4, "leaf": 3.0}]
        paths = enumerate_paths(DecisionTree.from_nodes(nodes, 1))
        assert paths[0].conditions == ((0, 0.5, LT),)
        assert paths[1].conditions == ((0, 0.5, LT), (0, 0.5, GE))


class TestRoutingProperties:
    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 10_000), depth=st.integers(1, 6), nf=st.integers(1, 6))
    def test_exactly_one_path_satisfied(self, seed, depth, nf):
        ens = random_ensemble(seed, nf, 3, depth)
        rng = np.random.default_rng(seed)
        X = rng.random((20, nf))
        # also hit thresholds exactly
        thr = ens._flat["threshold"][ens._flat["feature"] >= 0]
        X[:5] = rng.choice(thr, size=(5, nf))
        for tree in ens.trees:
            paths = enumerate_paths(tree)
            for x in X:
                hits = [p for p in paths if all(_satisfied(c, x) for c in p.conditions)]
                assert len(hits) == 1
                assert eval_tree(tree, x) == hits[0].leaf_value

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 10_000), task=st.sampled_from(list(Task)))
    def test_path_sum_equivalence(self, seed, task):
        ens = random_ensemble(seed, 4, 6, 4, task)
        X = np.random.default_rng(seed).random((10, 4))
        got = eval_ensemble(ens, X)
        for i, x in enumerate(X):
            expect = [ens.base_score] * ens.n_outputs
            for t, tree in enumerate(ens.trees):
                [hit] = [p for p in enumerate_paths(tree)
                         if all(_satisfied(c, x) for c in p.conditions)]
                expect[ens.tree_class(t)] += hit.leaf_value
            np.testing.assert_array_equal(got[i], expect)


class TestCollectThresholds:
    def test_example_tree(self, example_ensemble):
        assert collect_thresholds(example_ensemble).as_dict() == {0: [0.5], 1: [0.3]}

    def test_dedup(self, example_tree):
        ens = TreeEnsemble((example_tree, example_tree), 2)
        assert collect_thresholds(ens).as_dict() == {0: [0.5], 1: [0.3]}

    def test_sorted_and_unsplit_features_empty(self):
        nodes = [{"id": 0, "feature": 0, "threshold": 0.7, "left": 1, "right": 2},
                 {"id": 1, "feature": 0, "threshold": 0.2, "left": 3, "right": 4},
                 {"id": 2, "leaf": 0.0}, {"id": 3, "leaf": 0.0}, {"id": 4, "leaf": 0.0}]
        ens = TreeEnsemble((DecisionTree.from_nodes(nodes, 3),), 3)
        assert collect_thresholds(ens).as_dict() == {0: [0.2, 0.7], 1: [], 2: []}

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_document_traversal(self, seed):
        ens = random_ensemble(seed, 5, 10, 5)
        doc = json.loads(serialize_ensemble(ens))
        seen = {f: set() for f in range(5)}
        for tree in doc["trees"]:
            for node in tree["nodes"]:
                if "feature" in node:
                    seen[node["feature"]].add(node["threshold"])
        ts = collect_thresholds(ens)
        for f in range(5):
            assert ts[f].tolist() == sorted(seen[f])
            assert np.all(np.diff(ts[f]) > 0)


class TestParse:
    def test_worked_example(self, example_doc, example_tree):
        ens = parse_ensemble(json.dumps(example_doc))
        assert ens.task is Task.REGRESSION and len(ens.trees) == 1
        for x in ([0.2, 0.1], [0.2, 0.9], [0.5, 0.0]):
            assert eval_tree(ens.trees[0], x) == eval_tree(example_tree, x)

    def test_dangling_child(self, example_doc):
        example_doc["trees"][0]["nodes"][1]["left"] = 99
        with pytest.raises(DanglingReferenceError, match="id=1"):
            parse_ensemble(json.dumps(example_doc))

    def test_malformed_json(self):
        with pytest.raises(MalformedJSONError, match="line"):
            parse_ensemble('{"num_features": 2,')

    def test_feature_out_of_range(self, example_doc):
        example_doc["trees"][0]["nodes"][1]["feature"] = 2
        with pytest.raises(FeatureIndexError, match="id=1"):
            parse_ensemble(json.dumps(example_doc))

    def test_unknown_task(self, example_doc):
        example_doc["task"] = "ranking"
        with pytest.raises(UnknownTaskError):
            parse_ensemble(json.dumps(example_doc))

    def test_cycle(self, example_doc):
        example_doc["trees"][0]["nodes"][1]["right"] = 0
        with pytest.raises(TreeStructureError):
            parse_ensemble(json.dumps(example_doc))

    def test_unreachable_node(self, example_doc):
        example_doc["trees"][0]["nodes"].append({"id": 9, "leaf": 1.0})
        with pytest.raises(TreeStructureError, match="id=9"):
            parse_ensemble(json.dumps(example_doc))

    def test_multiclass_needs_valid_class(self, example_doc):
        example_doc.update(task="multiclass", num_classes=2)
        example_doc["trees"][0]["class"] = 2
        with pytest.raises(TreeStructureError):
            parse_ensemble(json.dumps(example_doc))

    def test_class_only_for_multiclass(self, example_doc):
        example_doc["trees"][0]["class"] = 0
        with pytest.raises(TreeStructureError):
            parse_ensemble(json.dumps(example_doc))

    @pytest.mark.parametrize("task", list(Task))
    def test_round_trip_is_bit_identical(self, task):
        ens = random_ensemble(11, 6, 15, 5, task)
        again = parse_ensemble(serialize_ensemble(parse_ensemble(serialize_ensemble(ens))))
        X = np.random.default_rng(5).uniform(-0.5, 1.5, size=(100, 6))
        assert np.array_equal(eval_ensemble(ens, X), eval_ensemble(again, X))
        assert serialize_ensemble(again) == serialize_ensemble(ens)


class TestRandomEnsemble:
    def test_stump(self):
        ens = random_ensemble(7, 3, 1, 1)
        [tree] = ens.trees
        assert tree.num_nodes == 3 and tree.depth() == 1
        f = int(tree.feature[tree.root])
        t = float(tree.threshold[tree.root])
        lo, hi = np.zeros(3), np.zeros(3)
        lo[f], hi[f] = t - 0.25, t
        assert eval_tree(tree, lo) != eval_tree(tree, hi)

    def test_deterministic(self):
        a = serialize_ensemble(random_ensemble(3, 4, 5, 4, "multiclass"))
        assert a == serialize_ensemble(random_ensemble(3, 4, 5, 4, "multiclass"))

    def test_thresholds_in_unit_interval_and_depth_bound(self):
        ens = random_ensemble(1, 5, 10, 4)
        thr = ens._flat["threshold"][ens._flat["feature"] >= 0]
        assert thr.size and np.all((thr >= 0) & (thr < 1))
        assert all(t.depth() <= 4 for t in ens.trees)
        leaves = ens._flat["value"][ens._flat["feature"] < 0]
        assert np.all(np.abs(leaves) <= 1)

    def test_rejects_zero_counts(self):
        with pytest.raises(InputError):
            random_ensemble(0, 0, 1, 1)


def test_ensemble_is_immutable(example_ensemble):
    with pytest.raises(ValueError):
        example_ensemble.trees[0].value[0] = 9.0

