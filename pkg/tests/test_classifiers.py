from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from evcharge.classifiers import (
    DecisionTreeClassifier,
    KnnClassifier,
    Leaf,
    RandomForestClassifier,
    Split,
    cross_validate,
    gini,
    model_from_json,
    model_to_json,
)
from evcharge.data_model import GeneratorRules, generate_synthetic_trips
from evcharge.errors import NotFitted
from evcharge.preprocess import EncodedMatrix, fit_encoders, kfold_plan, train_test_split, transform


def _naive_knn(train_x, train_y, q, k):
    d = [(float(np.sum((row - q) ** 2)), idx) for idx, row in enumerate(train_x)]
    d.sort()  # distance, then lower row index
    votes = Counter(int(train_y[idx]) for _, idx in d[:k])
    top = max(votes.values())
    return min(c for c, v in votes.items() if v == top)


def test_knn_exact_match_k1():
    x = np.array([[0.0, 1.0], [2.0, 3.0], [5.0, 5.0]])
    y = np.array([2, 0, 3])
    assert KnnClassifier(1).fit(x, y).predict(x[1:2]).tolist() == [0]


def test_knn_two_vs_one():
    x = np.array([[0.0, 0.0], [1.0, 0.0], [10.0, 10.0]])
    y = np.array([0, 0, 3])
    assert KnnClassifier(3).fit(x, y).predict([[0.2, 0.0]]).tolist() == [0]


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 9))
def test_knn_matches_full_sort_oracle(seed, k):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(k, 40))
    x = rng.integers(0, 4, (m, 3)).astype(float)  # ties are common
    y = rng.integers(0, 4, m)
    q = rng.integers(0, 4, (10, 3)).astype(float)
    got = KnnClassifier(k).fit(x, y).predict(q)
    assert got.tolist() == [_naive_knn(x, y, row, k) for row in q]


def test_knn_k_equals_m_is_global_majority():
    rng = np.random.default_rng(0)
    x = rng.random((30, 2))
    y = np.array([0] * 5 + [2] * 15 + [1] * 10)
    assert set(KnnClassifier(30).fit(x, y).predict(rng.random((8, 2)))) == {2}


def test_knn_rejects_oversized_k():
    with pytest.raises(ValueError):
        KnnClassifier(5).fit(np.zeros((3, 1)), [0, 0, 0])


def test_knn_predict_before_fit():
    with pytest.raises(NotFitted):
        KnnClassifier().predict([[0.0]])


def test_gini_values():
    assert gini([5, 5, 5, 5]) == pytest.approx(0.75)
    assert gini([7, 0, 0, 0]) == 0.0


def test_tree_pure_input_is_single_leaf():
    t = DecisionTreeClassifier().fit(np.random.default_rng(0).random((10, 3)), [2] * 10)
    assert isinstance(t.root, Leaf) and t.root.label == 2


def test_tree_root_threshold_midpoint():
    x = np.array([[0.0], [1.0], [10.0], [11.0]])
    y = np.array([0, 0, 3, 3])
    # candidates 0.5, 5.5, 10.5: weighted gini 1/3, 0, 1/3
    t = DecisionTreeClassifier(min_samples_leaf=1).fit(x, y)
    assert isinstance(t.root, Split) and t.root.threshold == 5.5
    assert t.root.left.counts == (2, 0, 0, 0) and t.root.right.counts == (0, 0, 0, 2)


def test_tree_memorises_distinct_rows():
    rng = np.random.default_rng(2)
    x = rng.random((200, 4))
    y = rng.integers(0, 4, 200)
    t = DecisionTreeClassifier(max_depth=None, min_samples_leaf=1).fit(x, y)
    assert np.array_equal(t.predict(x), y)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 6))
def test_tree_depth_and_leaf_bounds(seed, depth):
    rng = np.random.default_rng(seed)
    x = rng.random((60, 3))
    y = rng.integers(0, 4, 60)
    t = DecisionTreeClassifier(max_depth=depth, min_samples_leaf=3).fit(x, y)
    assert t.depth() <= depth

    def leaves(node):
        return [node] if isinstance(node, Leaf) else leaves(node.left) + leaves(node.right)
    assert all(sum(leaf.counts) >= 3 for leaf in leaves(t.root))
    assert sum(sum(leaf.counts) for leaf in leaves(t.root)) == 60


def test_degenerate_forest_equals_tree():
    rng = np.random.default_rng(4)
    x = rng.random((150, 5))
    y = (x[:, 0] > 0.5).astype(int) + 2 * (x[:, 3] > 0.3)
    tree = DecisionTreeClassifier().fit(x, y)
    forest = RandomForestClassifier(n_trees=1, features_per_split=5, bootstrap=False).fit(x, y)
    q = rng.random((100, 5))
    assert np.array_equal(tree.predict(q), forest.predict(q))


def test_forest_is_deterministic():
    rng = np.random.default_rng(5)
    x, y = rng.random((80, 4)), rng.integers(0, 4, 80)
    a = RandomForestClassifier(n_trees=5, seed=9).fit(x, y)
    b = RandomForestClassifier(n_trees=5, seed=9).fit(x, y)
    assert model_to_json(a) == model_to_json(b)


def _planted(seed, n=1200):
    d = generate_synthetic_trips(n, GeneratorRules(signal_strength=1.0, seed=seed))
    x = transform(d, fit_encoders(d))
    s = train_test_split(x, 0.3, seed)
    return x.values[s.train], x.labels[s.train], x.values[s.test], x.labels[s.test]


@pytest.mark.slow
def test_forest_not_worse_than_tree_over_seeds():
    for seed in range(10):
        xtr, ytr, xte, yte = _planted(seed, 3000)
        tree_acc = np.mean(DecisionTreeClassifier().fit(xtr, ytr).predict(xte) == yte)
        forest_acc = np.mean(RandomForestClassifier(n_trees=50, seed=seed).fit(xtr, ytr).predict(xte) == yte)
        assert forest_acc >= tree_acc - 0.02, (seed, forest_acc, tree_acc)


@pytest.mark.parametrize("make", [
    lambda: KnnClassifier(3),
    lambda: DecisionTreeClassifier(),
    lambda: RandomForestClassifier(n_trees=4, seed=1),
])
def test_model_json_round_trip(make):
    rng = np.random.default_rng(6)
    x, y = rng.random((60, 3)), rng.integers(0, 4, 60)
    model = make().fit(x, y)
    back = model_from_json(model_to_json(model), x, y)
    q = rng.random((20, 3))
    assert np.array_equal(model.predict(q), back.predict(q))


def test_knn_restore_rejects_other_data():
    x, y = np.zeros((4, 2)), np.zeros(4, dtype=int)
    text = model_to_json(KnnClassifier(1).fit(x, y))
    with pytest.raises(ValueError):
        model_from_json(text, x + 1, y)


class _Majority:
    def fit(self, x, y):
        self.label = np.bincount(y).argmax()
        return self

    def predict(self, x):
        return np.full(len(x), self.label)


def test_cv_constant_labels():
    x = EncodedMatrix(np.random.default_rng(0).random((50, 2)), np.arange(50), ("a", "b"), np.full(50, 1))
    res = cross_validate(_Majority, x, kfold_plan(x, 10, 3))
    assert res.fold_accuracies == (1.0,) * 10 and res.mean == 1.0


def test_cv_mean_and_coverage():
    rng = np.random.default_rng(1)
    x = EncodedMatrix(rng.random((47, 2)), np.arange(47), ("a", "b"), rng.integers(0, 4, 47))
    plan = kfold_plan(x, 5, 0)
    res = cross_validate(lambda: DecisionTreeClassifier(max_depth=2), x, plan)
    assert res.mean == pytest.approx(sum(res.fold_accuracies) / 5)
    assert sorted(np.concatenate(plan.folds).tolist()) == list(range(47))
