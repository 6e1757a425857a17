import numpy as np
import pytest

from conftest import random_tree
from tmjcds.explain import (
    brute_force_shap,
    forest_shap,
    summarize,
    tree_shap,
    write_summary_csv,
)
from tmjcds.forest import Forest, ForestHyperparams, TreeNode, fit


def leaf(cover, n1):
    return TreeNode(cover=cover, n0=cover - n1, n1=n1)


def stump(feature, threshold, left_leaf, right_leaf):
    node = TreeNode(
        cover=left_leaf.cover + right_leaf.cover,
        n0=left_leaf.n0 + right_leaf.n0,
        n1=left_leaf.n1 + right_leaf.n1,
        feature=feature,
        threshold=threshold,
        left=left_leaf,
        right=right_leaf,
    )
    return node


class TestTreeShap:
    def test_single_leaf_constant(self):
        tree = leaf(10, 7)
        att = tree_shap(tree, np.array([1.0, 2.0]), 2)
        assert np.allclose(att.per_feature, 0.0)
        assert att.base_value == pytest.approx(0.7)
        assert att.output == pytest.approx(0.7)

    def test_depth_one_closed_form(self):
        # split on feature 1: left leaf p=1.0 (cover 3), right leaf p=0.0 (cover 7)
        tree = stump(1, 0.5, leaf(3, 3), leaf(7, 0))
        x = np.array([0.0, 0.0, 0.0])  # goes left
        att = tree_shap(tree, x, 3)
        base = 0.3  # (3*1.0 + 7*0.0) / 10
        assert att.base_value == pytest.approx(base)
        assert att.per_feature[1] == pytest.approx(1.0 - base)
        assert att.per_feature[0] == 0.0 and att.per_feature[2] == 0.0
        assert att.output == pytest.approx(1.0)

    def test_zero_cover_rejected(self):
        tree = stump(0, 0.0, leaf(0, 0), leaf(5, 2))
        with pytest.raises(ValueError, match="cover"):
            tree_shap(tree, np.array([1.0]), 1)

    def test_oracle_equivalence_random_trees(self):
        rng = np.random.default_rng(42)
        for _ in range(150):
            depth = int(rng.integers(1, 4))
            d = int(rng.integers(1, 7))
            tree = random_tree(rng, depth, d)
            x = rng.normal(size=d)
            fast = tree_shap(tree, x, d)
            slow = brute_force_shap(tree, x, d)
            assert np.abs(fast.per_feature - slow.per_feature).max() <= 1e-9
            assert fast.base_value == pytest.approx(slow.base_value, abs=1e-12)
            assert fast.output == pytest.approx(slow.output, abs=1e-12)

    def test_repeated_feature_along_path(self):
        # same feature split twice on one path
        inner = stump(0, 1.5, leaf(4, 4), leaf(4, 0))
        tree = TreeNode(cover=12, n0=8, n1=4, feature=0, threshold=3.0,
                        left=inner, right=leaf(4, 0))
        for xv in (-1.0, 2.0, 5.0):
            x = np.array([xv])
            fast = tree_shap(tree, x, 1)
            slow = brute_force_shap(tree, x, 1)
            assert np.abs(fast.per_feature - slow.per_feature).max() <= 1e-12
            assert fast.local_accuracy_gap() <= 1e-12


class TestBruteForce:
    def test_single_leaf_zeros(self):
        att = brute_force_shap(leaf(5, 1), np.array([0.0]), 1)
        assert np.allclose(att.per_feature, 0.0)

    def test_symmetry_axiom(self):
        # output = 1 iff x0 <= 0 AND x1 <= 0 with balanced covers: the two
        # features are exchangeable, so their attributions must match
        left = stump(1, 0.0, leaf(2, 2), leaf(2, 0))
        tree = TreeNode(cover=8, n0=6, n1=2, feature=0, threshold=0.0,
                        left=left, right=leaf(4, 0))
        x = np.array([-1.0, -1.0])
        att = brute_force_shap(tree, x, 2)
        assert att.per_feature[0] == pytest.approx(att.per_feature[1], abs=1e-12)
        fast = tree_shap(tree, x, 2)
        assert fast.per_feature[0] == pytest.approx(fast.per_feature[1], abs=1e-12)

    def test_efficiency_axiom_random_trees(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            d = int(rng.integers(1, 6))
            tree = random_tree(rng, int(rng.integers(1, 4)), d)
            x = rng.normal(size=d)
            att = brute_force_shap(tree, x, d)
            assert att.per_feature.sum() == pytest.approx(
                att.output - att.base_value, abs=1e-9
            )

    def test_guard_refuses_wide_inputs(self):
        with pytest.raises(ValueError, match="d <= 15"):
            brute_force_shap(leaf(3, 1), np.zeros(16), 16)


class TestForestShap:
    def _trained(self, seed=0, n_trees=5):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(150, 5))
        y = (X[:, 0] + 0.5 * X[:, 2] + 0.3 * rng.normal(size=150) > 0).astype(np.int8)
        return fit(X, y, ForestHyperparams(n_trees=n_trees, max_depth=4, seed=seed)), X

    def test_single_tree_forest_equals_tree_shap(self):
        forest, X = self._trained(n_trees=1)
        x = X[0]
        att_forest = forest_shap(forest, x)
        att_tree = tree_shap(forest.trees[0], x, forest.n_features)
        assert np.array_equal(att_forest.per_feature, att_tree.per_feature)

    def test_two_identical_trees_average_is_identity(self):
        forest, X = self._trained(n_trees=1)
        doubled = Forest(
            trees=[forest.trees[0], forest.trees[0]],
            hyperparams=forest.hyperparams,
            feature_names=forest.feature_names,
        )
        x = X[3]
        att1 = tree_shap(forest.trees[0], x, forest.n_features)
        att2 = forest_shap(doubled, x)
        assert np.allclose(att1.per_feature, att2.per_feature, atol=1e-15)

    def test_linearity_two_tree_forest(self):
        forest, X = self._trained(n_trees=2)
        x = X[7]
        att = forest_shap(forest, x)
        parts = [tree_shap(t, x, forest.n_features) for t in forest.trees]
        assert np.allclose(
            att.per_feature,
            np.mean([p.per_feature for p in parts], axis=0),
            atol=0,
        )

    def test_local_accuracy_against_predict_proba(self):
        forest, X = self._trained(n_trees=8)
        for x in X[:25]:
            att = forest_shap(forest, x)
            _, p1 = forest.predict_proba(x)
            assert abs(att.base_value + att.per_feature.sum() - p1) <= 1e-9
            assert att.output == p1

    def test_dummy_feature_gets_zero(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(100, 3))
        y = (X[:, 0] > 0).astype(np.int8)
        # feature 2 never used: make it constant so no split can pick it
        X[:, 2] = 0.0
        forest = fit(X, y, ForestHyperparams(n_trees=10, seed=2, features_per_split="all",
                                             bootstrap=False))
        used = {
            node.feature
            for tree in forest.trees
            for node in tree.walk()
            if not node.is_leaf
        }
        assert 2 not in used
        for x in X[:10]:
            att = forest_shap(forest, x)
            assert att.per_feature[2] == 0.0


class TestSummarize:
    def test_constant_model_all_zero(self):
        forest = Forest(trees=[leaf(10, 5)], hyperparams=ForestHyperparams(n_trees=1),
                        feature_names=("a", "b"))
        data = np.random.default_rng(0).normal(size=(20, 2))
        summary = summarize(forest, data)
        assert np.allclose(summary.mean_abs_shap, 0.0)

    def test_stump_feature_ranked_first(self):
        tree = stump(1, 0.0, leaf(5, 5), leaf(5, 0))
        forest = Forest(trees=[tree], hyperparams=ForestHyperparams(n_trees=1),
                        feature_names=("a", "b", "c"))
        data = np.random.default_rng(1).normal(size=(30, 3))
        summary = summarize(forest, data)
        assert summary.ranking[0] == 1
        assert summary.rank_rows()[0][0] == "b"

    def test_ranking_stable_under_row_permutation(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(40, 4))
        y = (X[:, 1] - X[:, 3] > 0).astype(np.int8)
        forest = fit(X, y, ForestHyperparams(n_trees=5, max_depth=3, seed=0))
        s1 = summarize(forest, X)
        s2 = summarize(forest, X[::-1])
        assert s1.ranking == s2.ranking
        assert np.allclose(s1.mean_abs_shap, s2.mean_abs_shap)

    def test_empty_input_rejected(self):
        forest = Forest(trees=[leaf(4, 2)], hyperparams=ForestHyperparams(n_trees=1),
                        feature_names=("a",))
        with pytest.raises(ValueError, match="non-empty"):
            summarize(forest, np.zeros((0, 1)))

    def test_csv_export(self, tmp_path):
        tree = stump(0, 0.0, leaf(5, 5), leaf(5, 0))
        forest = Forest(trees=[tree], hyperparams=ForestHyperparams(n_trees=1),
                        feature_names=("a", "b"))
        data = np.random.default_rng(3).normal(size=(10, 2))
        summary = summarize(forest, data)
        rank_path = tmp_path / "rank.csv"
        cloud_path = tmp_path / "cloud.csv"
        write_summary_csv(summary, str(rank_path), str(cloud_path))
        rank_lines = rank_path.read_text().strip().splitlines()
        assert rank_lines[0] == "feature,mean_abs_shap,rank"
        assert len(rank_lines) == 3
        cloud_lines = cloud_path.read_text().strip().splitlines()
        assert cloud_lines[0] == "feature,row_index,shap_value,feature_value"
        assert len(cloud_lines) == 1 + 2 * 10
