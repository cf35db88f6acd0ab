import os

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from featsearch import data
from featsearch.errors import InputError

import oracles


def write(path, text):
    path.write_text(text)
    return path


def test_load_small_csv(tmp_path):
    p = write(tmp_path / "a.csv", "a,b,y\n1,2,0\n3,4,1\n5,6,0\n")
    d = data.load_csv(p, "classification")
    assert (d.n_samples, d.n_features) == (3, 2)
    assert d.feature_names == ("a", "b")
    assert d.y.tolist() == [0, 1, 0]


def test_target_defaults_to_last(tmp_path):
    p = write(tmp_path / "a.csv", "y,a,t\n1,2,3.5\n3,4,4.5\n")
    d = data.load_csv(p, "regression")
    assert d.y.tolist() == [3.5, 4.5]
    d = data.load_csv(p, "regression", target_column="y")
    assert d.y.tolist() == [1.0, 3.0] and d.feature_names == ("a", "t")


def test_semicolon_csv(tmp_path):
    p = write(tmp_path / "w.csv", '"a";"b";"quality"\n1;2;5\n3;4;6\n')
    d = data.load_csv(p, "classification")
    assert d.X.tolist() == [[1, 2], [3, 4]] and d.class_labels == (5.0, 6.0)


@pytest.mark.parametrize("body, where", [
    ("a,y\n1,0\nx,1\n", ":3:"),
    ("a,y\n1,0\n2\n", ":3:"),
    ("a,y\n1,0\n,1\n", ":3:"),
])
def test_bad_rows_report_line(tmp_path, body, where):
    p = write(tmp_path / "bad.csv", body)
    with pytest.raises(InputError, match=where):
        data.load_csv(p, "regression")


def test_missing_file_and_target(tmp_path):
    with pytest.raises(InputError):
        data.load_csv(tmp_path / "nope.csv", "regression")
    p = write(tmp_path / "a.csv", "a,y\n1,2\n")
    with pytest.raises(InputError):
        data.load_csv(p, "regression", target_column="z")


def test_classes_relabelled():
    d = data.make_dataset(np.zeros((4, 1)), [3, 7, 3, 9], "classification")
    assert d.y.tolist() == [0, 1, 0, 2] and d.class_labels == (3, 7, 9)


def test_non_finite_rejected():
    with pytest.raises(InputError):
        data.make_dataset(np.array([[np.nan]] * 12), np.zeros(12), "regression")


@pytest.mark.skipif(
    not (os.environ.get(data.WINE_ENV) or (data.DATA_DIR / "winequality-red.csv").is_file()),
    reason="Wine Quality Red file not available",
)
def test_wine_red_shape():
    d = data.load_bundled("wine_red")
    assert (d.n_samples, d.n_features) == (999, 12)


def test_synthetic_bundle_matches_generator():
    d = data.load_bundled("synthetic")
    g = data.synthetic_product()
    np.testing.assert_array_equal(d.X, g.X)
    np.testing.assert_array_equal(d.y, g.y)
    assert d.task == "regression"


def toy(n):
    return data.make_dataset(np.arange(n * 2.0).reshape(n, 2), np.arange(n * 1.0), "regression")


def test_split_sizes():
    s = data.split(toy(10), seed=0)
    assert (s.train.n_samples, s.test.n_samples) == (8, 2)
    s = data.split(toy(999), seed=0)
    assert (s.train.n_samples, s.test.n_samples) == (799, 200)


def test_split_deterministic_partition():
    d = toy(57)
    a, b = data.split(d, 5), data.split(d, 5)
    np.testing.assert_array_equal(a.train.X, b.train.X)
    rows = np.concatenate([a.train.y, a.test.y])
    assert sorted(rows.tolist()) == d.y.tolist()


def test_split_minimum_size():
    with pytest.raises(InputError):
        data.split(toy(9), 0)


def test_describe_constant_matrix():
    v = data.describe(np.ones((5, 3))).reshape(7, 7)
    assert v[0].tolist() == [3, 0, 5, 5, 5, 5, 5]  # the count row across columns
    assert v[1].tolist() == [3, 0, 0, 0, 0, 0, 0]  # std row
    for r in range(2, 7):
        assert v[r].tolist() == [3, 0, 1, 1, 1, 1, 1]


def test_describe_matches_oracle():
    X = np.random.default_rng(0).normal(size=(20, 6))
    np.testing.assert_allclose(data.describe(X), oracles.describe_oracle(X), rtol=1e-9, atol=1e-9)


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 15), st.integers(1, 8)),
              elements=st.floats(-1e6, 1e6)))
def test_describe_width_and_row_permutation(X):
    v = data.describe(X)
    assert v.shape == (49,)
    perm = np.random.default_rng(0).permutation(X.shape[0])
    np.testing.assert_allclose(data.describe(X[perm]), v, rtol=1e-9, atol=1e-6)


def test_describe_single_column_vector():
    np.testing.assert_array_equal(data.describe(np.arange(4.0)), data.describe(np.arange(4.0)[:, None]))
