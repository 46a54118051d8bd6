"""
Testes dos regressores: MLR, árvore CART e floresta aleatória.
"""

import json

import numpy as np
import pytest

from eeatc.errors import BadConfig, NotFitted, RankDeficient, ShapeMismatch, TooFewRows
from eeatc.metrics import r2
from eeatc.regress import (
    ForestModel,
    ForestParams,
    LinearModel,
    RegressionTree,
    RegressorContract,
    forest_fit,
    forest_predict,
    mlr_fit,
    mlr_predict,
    tree_fit,
    tree_predict,
    tree_rng,
)

SINGLE_TREE = ForestParams(n_trees=1, max_depth=1, min_samples_leaf=1, min_samples_split=2, bootstrap=False)


def test_mlr_exact_line():
    model = mlr_fit([[1.0], [2.0], [3.0]], [2.0, 4.0, 6.0])
    assert model.coefficients[0] == pytest.approx(2.0, abs=1e-9)
    assert model.intercept == pytest.approx(0.0, abs=1e-9)
    assert mlr_predict(model, [[0.0]])[0] == pytest.approx(model.intercept)


def test_mlr_constant_target():
    rng = np.random.default_rng(0)
    model = mlr_fit(rng.normal(size=(20, 3)), np.full(20, 4.5))
    assert np.all(model.coefficients == 0.0)
    assert model.intercept == 4.5


def test_mlr_matches_pseudo_inverse():
    rng = np.random.default_rng(1)
    for case in range(200):
        n_features = int(rng.integers(1, 5))
        n_rows = int(rng.integers(max(12, 3 * n_features), 201))
        X = rng.normal(size=(n_rows, n_features)) * rng.uniform(1.0, 5.0, n_features) \
            + rng.uniform(-3.0, 3.0, n_features)
        y = X @ rng.normal(scale=3.0, size=n_features) + rng.normal() + rng.normal(scale=0.5, size=n_rows)
        design = np.column_stack([np.ones(n_rows), X])
        expected = np.linalg.pinv(design) @ y
        model = mlr_fit(X, y)
        assert model.intercept == pytest.approx(expected[0], abs=1e-8), case
        np.testing.assert_allclose(model.coefficients, expected[1:], rtol=0.0, atol=1e-8, err_msg=str(case))
        # resíduos ortogonais ao desenho
        residual = y - mlr_predict(model, X)
        assert np.abs(design.T @ residual).max() <= 1e-6, case


def test_mlr_predict_hand_arithmetic():
    model = LinearModel.from_dict({"coefficients": [2.0], "intercept": 0.0})
    assert mlr_predict(model, [[3.0]]).tolist() == [6.0]


def test_mlr_interpolates_linear_data():
    rng = np.random.default_rng(2)
    X = rng.uniform(size=(40, 2))
    y = 3.0 * X[:, 0] - X[:, 1] + 2.0
    model = mlr_fit(X, y)
    assert r2(mlr_predict(model, X), y) == pytest.approx(1.0, abs=1e-10)


def test_mlr_too_few_rows():
    with pytest.raises(TooFewRows):
        mlr_fit([[1.0, 2.0], [3.0, 4.0]], [1.0, 2.0])


def test_mlr_collinear_flagged_and_strict():
    rng = np.random.default_rng(3)
    a = rng.normal(scale=10.0, size=30)
    X = np.column_stack([a, 2.0 * a])
    y = a + 1.0
    model = mlr_fit(X, y)
    assert model.rank_deficient
    assert r2(mlr_predict(model, X), y) == pytest.approx(1.0, abs=1e-6)
    with pytest.raises(RankDeficient):
        mlr_fit(X, y, strict=True)


def test_mlr_shape_and_fit_errors():
    with pytest.raises(NotFitted):
        LinearModel().predict([[1.0]])
    model = mlr_fit([[1.0], [2.0], [3.0]], [1.0, 2.0, 3.0])
    with pytest.raises(ShapeMismatch):
        mlr_predict(model, [[1.0, 2.0]])


def test_tree_constant_target_is_single_leaf():
    tree = tree_fit(np.arange(10.0).reshape(-1, 1), np.full(10, 3.0), SINGLE_TREE, tree_rng(0, 0))
    assert tree.n_nodes == 1
    assert tree.root.is_leaf
    assert tree_predict(tree, [100.0]) == 3.0


def test_tree_depth_one_split():
    X = np.array([[1.0], [2.0], [3.0], [4.0]])
    y = np.array([0.0, 0.0, 10.0, 10.0])
    tree = tree_fit(X, y, SINGLE_TREE, tree_rng(0, 0))
    assert tree.root.feature == 0
    assert tree.root.threshold == 2.5
    assert tree.node(tree.root.left).value == 0.0
    assert tree.node(tree.root.right).value == 10.0
    assert tree_predict(tree, [2.0]) == 0.0
    assert tree_predict(tree, [3.0]) == 10.0
    assert tree_predict(tree, [2.5]) == 0.0


def _exhaustive_best_split(X, y, min_leaf=1):
    """Oráculo: menor SSE dos filhos; empates no menor índice e menor limiar.

    Devolve None quando nenhum corte reduz o SSE do nó.
    """
    parent = ((y - y.mean()) ** 2).sum()
    tol = 1e-11 * parent
    best = None
    for f in range(X.shape[1]):
        values = np.unique(X[:, f])
        for lo, hi in zip(values[:-1], values[1:]):
            thr = 0.5 * (lo + hi)
            left, right = y[X[:, f] <= thr], y[X[:, f] > thr]
            if len(left) < min_leaf or len(right) < min_leaf:
                continue
            sse = ((left - left.mean()) ** 2).sum() + ((right - right.mean()) ** 2).sum()
            if best is None or sse < best[0] - tol:
                best = (sse, f, thr)
    if best is None or parent - best[0] <= tol:
        return None
    return best


def _random_split_dataset(rng):
    n_rows = int(rng.integers(2, 33))
    n_features = int(rng.integers(1, 4))
    if rng.random() < 0.6:
        # poucos níveis inteiros: muitos valores repetidos e ganhos empatados
        X = rng.integers(0, int(rng.integers(1, 6)), size=(n_rows, n_features)).astype(float)
        y = rng.integers(0, int(rng.integers(1, 5)), size=n_rows).astype(float)
    else:
        X = np.round(rng.uniform(0, 10, size=(n_rows, n_features)), 1)
        if rng.random() < 0.5:
            X[:, 0] = X[rng.integers(0, n_rows, n_rows), 0]
        y = rng.normal(size=n_rows)
    if n_features > 1 and rng.random() < 0.2:
        X[:, -1] = X[:, 0]
    return X, y


def test_tree_root_split_matches_exhaustive_oracle():
    rng = np.random.default_rng(2024)
    for case in range(500):
        X, y = _random_split_dataset(rng)
        params = ForestParams(n_trees=1, max_depth=1, min_samples_leaf=1, min_samples_split=2,
                              mtry=X.shape[1], bootstrap=False)
        tree = tree_fit(X, y, params, tree_rng(case, 0))
        expected = _exhaustive_best_split(X, y)
        if expected is None:
            assert tree.root.is_leaf, case
            assert tree.n_nodes == 1, case
            continue
        _, feature, threshold = expected
        assert tree.root.feature == feature, case
        assert tree.root.threshold == threshold, case
        goes_left = X[:, feature] <= threshold
        assert tree.node(tree.root.left).value == pytest.approx(y[goes_left].mean()), case
        assert tree.node(tree.root.right).value == pytest.approx(y[~goes_left].mean()), case


def test_tree_min_samples_leaf_matches_oracle():
    rng = np.random.default_rng(7)
    for case in range(100):
        X, y = _random_split_dataset(rng)
        params = ForestParams(n_trees=1, max_depth=1, min_samples_leaf=3, min_samples_split=2,
                              mtry=X.shape[1], bootstrap=False)
        tree = tree_fit(X, y, params, tree_rng(case, 0))
        expected = _exhaustive_best_split(X, y, min_leaf=3) if len(y) >= 6 else None
        if expected is None:
            assert tree.root.is_leaf, case
            continue
        assert (tree.root.feature, tree.root.threshold) == expected[1:], case


def test_tree_constant_column_never_split():
    rng = np.random.default_rng(5)
    x = rng.uniform(size=40)
    y = np.sin(6 * x)
    X = np.column_stack([x, np.zeros(40)])
    params = ForestParams(n_trees=1, mtry=2, min_samples_leaf=1, min_samples_split=2, bootstrap=False)
    tree = tree_fit(X, y, params, tree_rng(0, 0))
    assert set(tree.feature.tolist()) <= {-1, 0}


def test_tree_training_fit_improves_with_depth():
    rng = np.random.default_rng(6)
    X = rng.uniform(size=(80, 2))
    y = X[:, 0] ** 2 + np.sin(5 * X[:, 1])
    scores = []
    for depth in range(1, 7):
        params = ForestParams(n_trees=1, max_depth=depth, mtry=2, min_samples_leaf=1,
                              min_samples_split=2, bootstrap=False)
        tree = tree_fit(X, y, params, tree_rng(0, 0))
        scores.append(r2(tree.predict(X), y))
    assert all(b >= a - 1e-12 for a, b in zip(scores, scores[1:]))


def test_batch_prediction_matches_single_rows():
    rng = np.random.default_rng(7)
    X = rng.normal(size=(60, 3))
    y = X[:, 0] - 2 * X[:, 2]
    tree = tree_fit(X, y, ForestParams(n_trees=1, mtry=3, bootstrap=False), tree_rng(1, 0))
    np.testing.assert_array_equal(tree.predict(X), [tree_predict(tree, row) for row in X])


def test_forest_of_one_equals_tree():
    rng = np.random.default_rng(8)
    X = rng.normal(size=(50, 2))
    y = X[:, 0] * X[:, 1]
    params = ForestParams(n_trees=1, mtry=2, bootstrap=False)
    forest = forest_fit(X, y, params, seed=9)
    tree = tree_fit(X, y, params, tree_rng(9, 0))
    np.testing.assert_array_equal(forest_predict(forest, X), tree.predict(X))


def test_forest_constant_target(small_forest):
    rng = np.random.default_rng(9)
    forest = forest_fit(rng.normal(size=(30, 2)), np.full(30, 2.5), small_forest, seed=1)
    assert np.all(forest.predict(rng.normal(size=(10, 2))) == 2.5)


def test_forest_thread_count_does_not_change_predictions(small_forest):
    rng = np.random.default_rng(10)
    X = rng.normal(size=(120, 3))
    y = X[:, 0] + np.abs(X[:, 1]) + rng.normal(scale=0.2, size=120)
    single = forest_fit(X, y, small_forest, seed=4, n_jobs=1)
    threaded = forest_fit(X, y, small_forest, seed=4, n_jobs=8)
    np.testing.assert_array_equal(single.predict(X), threaded.predict(X))


def test_forest_predictions_within_target_range(small_forest):
    rng = np.random.default_rng(11)
    X = rng.normal(size=(100, 2))
    y = rng.uniform(-3.0, 7.0, size=100)
    forest = forest_fit(X, y, small_forest, seed=2)
    out = forest.predict(rng.normal(scale=5.0, size=(1000, 2)))
    assert out.min() >= y.min()
    assert out.max() <= y.max()


def test_forest_mean_of_routed_leaves():
    first = RegressionTree([0, -1, -1], [0.5, 0.0, 0.0], [1, -1, -1], [2, -1, -1], [5.0, 0.0, 10.0], [4, 2, 2], 1)
    second = RegressionTree([0, -1, -1], [1.5, 0.0, 0.0], [1, -1, -1], [2, -1, -1], [5.0, 4.0, 6.0], [4, 2, 2], 1)
    forest = ForestModel(ForestParams(n_trees=2))
    forest.trees = [first, second]
    forest.n_features = 1
    # x=1.0: direita na primeira (10), esquerda na segunda (4)
    assert forest_predict(forest, [[1.0]])[0] == 7.0


def test_forest_serialization_is_exact(small_forest):
    rng = np.random.default_rng(12)
    X = rng.normal(size=(60, 2))
    y = X[:, 0] + rng.normal(scale=0.3, size=60)
    forest = forest_fit(X, y, small_forest, seed=3)
    restored = ForestModel.from_dict(json.loads(json.dumps(forest.to_dict())))
    np.testing.assert_array_equal(restored.predict(X), forest.predict(X))


def test_forest_params_validation():
    with pytest.raises(BadConfig):
        ForestParams(n_trees=0)
    with pytest.raises(BadConfig):
        ForestParams(mtry=4).resolve_mtry(3)
    assert ForestParams().resolve_mtry(4) == 2
    assert ForestParams().resolve_mtry(1) == 1


def test_regressors_follow_common_contract(small_forest):
    assert isinstance(LinearModel(), RegressorContract)
    assert isinstance(ForestModel(small_forest), RegressorContract)
    with pytest.raises(NotFitted):
        ForestModel(small_forest).predict([[1.0]])
