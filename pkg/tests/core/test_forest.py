import numpy as np
import pytest

from noisyneighbor.core.errors import ConfigError
from noisyneighbor.core.forest import (
    DecisionTree,
    ForestHyperparams,
    ForestModel,
    best_split,
    gini_impurity,
    grow_tree,
    predict_forest,
    predict_forest_batch,
    train_forest,
    vote_counts,
)


def brute_force_split(X, y, min_leaf=1):
    """Enumerate every feature and midpoint; ties to lowest feature then threshold."""
    noisy = y > 0
    parent = gini_impurity([np.sum(~noisy), np.sum(noisy)])
    best = None
    for f in range(X.shape[1]):
        values = np.unique(X[:, f])
        for a, b in zip(values[:-1], values[1:]):
            t = 0.5 * (a + b)
            left = X[:, f] <= t
            if left.sum() < min_leaf or (~left).sum() < min_leaf:
                continue
            decrease = parent
            for side in (left, ~left):
                decrease -= side.mean() * gini_impurity([np.sum(side & ~noisy), np.sum(side & noisy)])
            if best is None or decrease > best[2] + 1e-9:
                best = (f, t, decrease)
    if best is None or best[2] <= 1e-12:
        return None
    return best


def leaf(quiet, noisy):
    return DecisionTree([-1], [0.0], [-1], [-1], [[quiet, noisy]])


class TestGini:
    @pytest.mark.parametrize("counts, expected", [([5, 5], 0.5), ([10, 0], 0.0), ([1, 3], 0.375), ([2, 2, 0], 0.5)])
    def test_values(self, counts, expected):
        assert gini_impurity(counts) == pytest.approx(expected)

    @pytest.mark.parametrize("counts", [[0, 0], [-1, 3]])
    def test_invalid(self, counts):
        with pytest.raises(ValueError):
            gini_impurity(counts)


class TestBestSplit:
    def test_four_points(self):
        X = np.array([[1.0], [2.0], [3.0], [4.0]])
        split = best_split((X, np.array([-1, -1, 1, 1])))
        assert split.feature == 0
        assert split.threshold == 2.5
        assert split.decrease == pytest.approx(0.5)

    def test_pure_node_has_no_split(self):
        assert best_split((np.array([[1.0], [2.0]]), np.array([1, 1]))) is None

    def test_identical_features_have_no_split(self):
        assert best_split((np.ones((4, 2)), np.array([1, -1, 1, -1]))) is None

    def test_tie_goes_to_lowest_feature(self):
        X = np.array([[1.0, 1.0], [2.0, 2.0], [3.0, 3.0], [4.0, 4.0]])
        assert best_split((X, np.array([-1, -1, 1, 1]))).feature == 0

    def test_needs_two_instances(self):
        with pytest.raises(ValueError):
            best_split((np.array([[1.0]]), np.array([1])))

    @pytest.mark.parametrize("min_leaf", [1, 3])
    def test_matches_exhaustive_search(self, rng, min_leaf):
        for _ in range(100):
            n = int(rng.integers(2, 31))
            d = int(rng.integers(1, 4))
            X = rng.integers(0, 6, size=(n, d)).astype(float)
            y = np.where(rng.random(n) < 0.4, 1, -1)
            expected = brute_force_split(X, y, min_leaf)
            split = best_split((X, y), min_leaf)
            if expected is None:
                assert split is None
            else:
                assert (split.feature, split.threshold) == expected[:2]
                assert split.decrease == pytest.approx(expected[2], abs=1e-9)


class TestTree:
    def test_fits_distinct_training_points(self, rng):
        X = rng.normal(size=(60, 3))
        y = np.where(X[:, 0] * X[:, 1] > 0, 1, -1)
        tree = grow_tree((X, y))
        assert np.array_equal(tree.predict_batch(X), y)

    def test_pre_order_layout(self, rng):
        X = rng.normal(size=(40, 2))
        y = np.where(X[:, 0] > 0.3, 1, -1)
        tree = grow_tree((X, y))
        for node in range(tree.n_nodes):
            if not tree.is_leaf(node):
                assert tree.left[node] == node + 1
                assert tree.right[node] > node + 1
                assert (tree.counts[tree.left[node]] + tree.counts[tree.right[node]] == tree.counts[node]).all()

    def test_min_leaf_is_respected(self, rng):
        X = rng.normal(size=(50, 3))
        y = np.where(rng.random(50) < 0.5, 1, -1)
        tree = grow_tree((X, y), min_leaf=5)
        leaves = [n for n in range(tree.n_nodes) if tree.is_leaf(n)]
        assert all(tree.counts[n].sum() >= 5 for n in leaves)

    def test_leaf_tie_votes_quiet(self):
        assert leaf(1, 1).leaf_label(0) == -1
        assert leaf(1, 2).predict_batch(np.zeros((2, 3))).tolist() == [1, 1]

    def test_bootstrap_uses_resampled_counts(self, rng):
        X = rng.normal(size=(30, 2))
        y = np.where(X[:, 0] > 0, 1, -1)
        tree = grow_tree((X, y), rng=np.random.default_rng(0))
        assert tree.counts[0].sum() == 30

    def test_empty_input(self):
        with pytest.raises(ValueError):
            grow_tree((np.empty((0, 3)), np.empty(0)))


class TestForest:
    def test_hyperparams(self):
        with pytest.raises(ConfigError):
            ForestHyperparams(n_trees=0)
        with pytest.raises(ConfigError):
            ForestHyperparams(min_leaf=0)

    def test_vote_tie_is_quiet(self):
        model = ForestModel((leaf(0, 1), leaf(1, 0)), n_features=3)
        assert predict_forest(model, (0.0, 0.0, 0.0)) == -1
        assert vote_counts(model, np.zeros((1, 3))).tolist() == [1]

    def test_majority(self):
        model = ForestModel((leaf(0, 1), leaf(0, 1), leaf(1, 0)), n_features=3)
        assert predict_forest(model, (0.0, 0.0, 0.0)) == 1

    def test_dimension_mismatch(self):
        model = ForestModel((leaf(0, 1),), n_features=3)
        with pytest.raises(ValueError):
            predict_forest(model, (1.0, 2.0))

    def test_learns_separable_data(self, separable_dataset):
        model = train_forest(separable_dataset.instances, ForestHyperparams(n_trees=25, seed=1))
        assert len(model.trees) == 25
        predictions = predict_forest_batch(model, separable_dataset.features)
        assert np.mean(predictions == separable_dataset.labels) >= 0.95

    def test_independent_of_worker_count(self, separable_dataset):
        h = ForestHyperparams(n_trees=8, seed=11)
        data = (separable_dataset.features, separable_dataset.labels)
        serial = train_forest(data, h, n_jobs=1)
        parallel = train_forest(data, h, n_jobs=2)
        for a, b in zip(serial.trees, parallel.trees):
            assert np.array_equal(a.feature, b.feature)
            assert np.array_equal(a.threshold, b.threshold)
            assert np.array_equal(a.counts, b.counts)

    def test_seed_changes_bootstrap(self, separable_dataset):
        data = (separable_dataset.features, separable_dataset.labels)
        a = train_forest(data, ForestHyperparams(n_trees=3, seed=1))
        b = train_forest(data, ForestHyperparams(n_trees=3, seed=2))
        assert any(not np.array_equal(x.counts, z.counts) for x, z in zip(a.trees, b.trees))

    def test_single_class_rejected(self):
        with pytest.raises(ValueError):
            train_forest((np.zeros((3, 3)), np.ones(3)), ForestHyperparams(n_trees=2))
