import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from featsearch import metrics
from featsearch.data import load_bundled, split
from featsearch.downstream import EvalConfig, folds, holdout_score, train_eval
from featsearch.errors import InputError
from featsearch.trees import DecisionTree, RandomForest, Ridge


# -- metrics -------------------------------------------------------------------


def test_f1_perfect():
    assert metrics.f1([1, 0, 1], [1, 0, 1]) == 1.0


def test_f1_hand_confusion():
    # class 1: tp=1 fp=1 fn=1 -> P=R=F=0.5; class 0 the same
    assert metrics.f1([1, 1, 0, 0], [1, 0, 1, 0]) == 0.5
    assert metrics.precision([1, 1, 0, 0], [1, 0, 1, 0]) == 0.5
    assert metrics.recall([1, 1, 0, 0], [1, 0, 1, 0]) == 0.5


def test_macro_precision_recall_by_hand():
    y, p = [0, 0, 0, 1, 2, 2], [0, 0, 1, 1, 2, 0]
    # class 0: tp2 fp1 fn1; class 1: tp1 fp1 fn0; class 2: tp1 fp0 fn1
    assert metrics.precision(y, p) == pytest.approx((2 / 3 + 1 / 2 + 1) / 3)
    assert metrics.recall(y, p) == pytest.approx((2 / 3 + 1 + 1 / 2) / 3)


def test_auc():
    assert metrics.rocauc([0, 1, 0, 1], [0, 1, 0, 1]) == 1.0
    assert metrics.rocauc([0, 1, 0, 1], [0.1, 0.4, 0.5, 0.8]) == 0.75
    with pytest.raises(metrics.UndefinedMetricError):
        metrics.rocauc([1, 1], [0.2, 0.3])


def test_auc_multiclass_one_vs_rest():
    y = np.array([0, 1, 2, 0])
    S = np.eye(3)[y]
    assert metrics.rocauc(y, S) == 1.0


def test_regression_metrics():
    y = np.array([1.0, 2.0, 4.0])
    for fn in metrics.REGRESSION_METRICS.values():
        assert fn(y, y) == 1.0
    assert metrics.one_minus_rae(y, np.full(3, y.mean())) == pytest.approx(0.0, abs=1e-15)
    assert metrics.one_minus_rae([0, 2], [1, 1]) == 0.0
    assert metrics.one_minus_mse([0, 2], [1, 1]) == 0.0
    assert metrics.one_minus_rmse([0, 2], [1, 1]) == 0.0
    assert metrics.one_minus_mae([0, 2], [1, 1]) == 0.0
    with pytest.raises(metrics.UndefinedMetricError):
        metrics.one_minus_rae([3, 3], [1, 2])
    with pytest.raises(InputError):
        metrics.one_minus_mae([1, 2], [1])


# -- trees ---------------------------------------------------------------------


def best_stump_gini(X, y):
    """Exhaustive search for the root split minimising weighted Gini impurity."""
    def gini(labels):
        if len(labels) == 0:
            return 0.0
        _, c = np.unique(labels, return_counts=True)
        p = c / c.sum()
        return 1 - (p * p).sum()

    best = (np.inf, None, None)
    for j in range(X.shape[1]):
        vals = np.unique(X[:, j])
        for a, b in zip(vals[:-1], vals[1:]):
            t = a / 2 + b / 2
            left = X[:, j] <= t
            cost = left.sum() * gini(y[left]) + (~left).sum() * gini(y[~left])
            if cost < best[0] - 1e-12:
                best = (cost, j, t)
    return best


def test_root_split_matches_exhaustive_gini():
    rng = np.random.default_rng(0)
    for _ in range(20):
        X = rng.normal(size=(40, 3)).round(1)
        y = (X[:, 0] + 0.5 * rng.normal(size=40) > 0).astype(np.int64)
        tree = DecisionTree(2, max_depth=1).fit(X, y)
        feat, thr = tree.nodes_[0][0], tree.nodes_[1][0]
        cost, j, t = best_stump_gini(X, y)
        left = X[:, feat] <= thr
        gini = lambda v: 1 - ((np.bincount(v, minlength=2) / max(len(v), 1)) ** 2).sum()
        mine = left.sum() * gini(y[left]) + (~left).sum() * gini(y[~left])
        assert mine == pytest.approx(cost, abs=1e-9)


def test_full_tree_fits_training_set():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(100, 4))
    y = rng.integers(0, 3, 100)
    tree = DecisionTree(3, max_depth=50).fit(X, y)
    assert (tree.predict(X) == y).all()
    reg = DecisionTree(0, max_depth=50).fit(X, X[:, 0] * 2)
    np.testing.assert_allclose(reg.predict(X), X[:, 0] * 2)


def test_single_tree_forest_equals_tree():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(80, 5))
    y = (X[:, 1] > 0).astype(np.int64)
    forest = RandomForest(2, n_trees=1, max_features=None, bootstrap=False, seed=7).fit(X, y)
    tree = DecisionTree(2, seed=7).fit(X, y)
    Xt = rng.normal(size=(50, 5))
    np.testing.assert_array_equal(forest.predict_raw(Xt), tree.predict_raw(Xt))


def test_ridge_recovers_linear_map():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(500, 3))
    y = X @ [1.0, -2.0, 0.5] + 3.0
    pred = Ridge(0, alpha=1e-8).fit(X, y).predict(X)
    np.testing.assert_allclose(pred, y, atol=1e-6)


# -- train_eval ----------------------------------------------------------------


def test_separable_classification():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(200, 3))
    y = (X[:, 0] > 0).astype(np.int64)
    assert train_eval(X, y, "classification").value >= 0.98


def test_identity_regression():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(200, 3))
    assert train_eval(X, X[:, 1].copy(), "regression").value >= 0.95


def test_train_eval_deterministic():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(120, 4))
    y = X[:, 0] * X[:, 1]
    a = train_eval(X, y, "regression", EvalConfig(cv_seed=3))
    b = train_eval(X, y, "regression", EvalConfig(cv_seed=3))
    assert a == b


@pytest.mark.parametrize("model", ["random_forest", "decision_tree", "ridge"])
@pytest.mark.parametrize("metric", ["f1", "precision", "recall", "rocauc"])
def test_every_model_and_classification_metric(model, metric):
    rng = np.random.default_rng(0)
    X = rng.normal(size=(90, 3))
    y = (X[:, 0] > 0).astype(np.int64) + (X[:, 1] > 1)
    s = train_eval(X, y, "classification", EvalConfig(model=model, metric=metric))
    assert 0.0 <= s.value <= 1.0 and s.metric == metric


@pytest.mark.parametrize("metric", list(metrics.REGRESSION_METRICS))
def test_regression_metrics_in_train_eval(metric):
    rng = np.random.default_rng(0)
    X = rng.normal(size=(60, 2))
    s = train_eval(X, X[:, 0] + 0.1 * rng.normal(size=60), "regression", EvalConfig(metric=metric))
    assert s.value <= 1.0


def test_bad_inputs():
    X = np.ones((20, 2))
    X[0, 0] = np.inf
    with pytest.raises(InputError):
        train_eval(X, np.arange(20.0), "regression")
    with pytest.raises(InputError):
        train_eval(np.ones((20, 2)), np.zeros(20, dtype=int), "classification")
    with pytest.raises(InputError):
        train_eval(np.ones((20, 2)), np.arange(20.0), "regression", EvalConfig(metric="f1"))
    with pytest.raises(InputError):
        train_eval(np.ones((20, 2)), np.arange(20.0), "regression", EvalConfig(model="svm"))


@settings(max_examples=30, deadline=None)
@given(st.integers(10, 80), st.integers(2, 4), st.integers(0, 1000))
def test_folds_partition_and_stratify(n, k, seed):
    y = np.random.default_rng(seed).integers(0, k, n)
    parts = folds(y, "classification", seed)
    assert sorted(np.concatenate(parts).tolist()) == list(range(n))
    for c in np.unique(y):
        counts = [np.sum(y[p] == c) for p in parts]
        assert max(counts) - min(counts) <= 1


def test_duplicate_column_is_harmless():
    d = split(load_bundled("synthetic"), 0).train
    a = train_eval(d.X, d.y, d.task).value
    b = train_eval(np.column_stack([d.X, d.X[:, 3]]), d.y, d.task).value
    assert abs(a - b) < 0.05


def test_holdout_score():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(100, 2))
    y = (X[:, 0] > 0).astype(np.int64)
    assert holdout_score(X[:80], y[:80], X[80:], y[80:], "classification").value > 0.9
