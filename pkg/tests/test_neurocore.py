import numpy as np
import pytest

from featsearch import neurocore as nc
from featsearch.errors import InputError

from gradcheck import check


def test_softmax_cross_entropy_uniform():
    loss = nc.softmax_cross_entropy(nc.Tensor([0.0, 0.0]), 0)
    assert loss.data == pytest.approx(np.log(2), abs=1e-12)


def test_mse_zero():
    assert nc.mse(nc.Tensor([1.0, 2.0]), [1.0, 2.0]).data == 0.0


def test_shape_mismatch_raises():
    with pytest.raises(InputError):
        nc.matmul(nc.Tensor(np.ones((2, 3))), nc.Tensor(np.ones((2, 3))))
    with pytest.raises(InputError):
        nc.add(nc.Tensor(np.ones(3)), nc.Tensor(np.ones(4)))


def test_lstm_zero_weights():
    p = nc.LSTMCellParams(nc.parameter(np.zeros((5, 12))), nc.parameter(np.zeros(12)))
    h, c = nc.lstm_step(p, np.ones((2, 2)), np.zeros((2, 3)), np.zeros((2, 3)))
    assert np.all(h.data == 0)


def test_ops_do_not_mutate_inputs():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=(3, 4)), rng.normal(size=(4, 2))
    a0, b0 = a.copy(), b.copy()
    out = nc.sum_(nc.tanh(nc.parameter(a) @ nc.parameter(b)))
    out.backward()
    assert np.array_equal(a, a0) and np.array_equal(b, b0)


def test_adam_zero_gradient_keeps_params():
    p = {"w": nc.parameter([1.0, -2.0])}
    st = nc.AdamState()
    for _ in range(5):
        nc.adam_step(st, p, {"w": np.zeros(2)})
    assert np.array_equal(p["w"].data, [1.0, -2.0])


def test_adam_minimises_square():
    p = {"w": nc.parameter([1.0])}
    st = nc.AdamState(lr=0.01)
    for _ in range(500):
        nc.zero_grads(p)
        loss = nc.sum_(p["w"] * p["w"])
        loss.backward()
        nc.adam_step(st, p)
    assert abs(p["w"].data[0]) < 1e-2


def test_adam_deterministic():
    def run():
        rng = np.random.default_rng(3)
        layer = nc.Dense.init(rng, 4, 2)
        params = {"W": layer.W, "b": layer.b}
        st = nc.AdamState()
        X = rng.normal(size=(8, 4))
        for _ in range(20):
            nc.zero_grads(params)
            nc.mse(layer(X), np.ones((8, 2))).backward()
            nc.adam_step(st, params)
        return params["W"].data.copy()

    assert np.array_equal(run(), run())


def test_global_norm_clip():
    g = nc.clip_by_global_norm({"a": np.array([3.0, 4.0])}, 1.0)
    assert np.linalg.norm(g["a"]) == pytest.approx(1.0)


def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    params = {"w": nc.parameter(rng.normal(size=(3, 2)))}
    nc.save_checkpoint(tmp_path / "c.json", params, {"note": "x"})
    loaded, extra = nc.load_checkpoint(tmp_path / "c.json")
    assert np.array_equal(loaded["w"].data, params["w"].data)
    assert extra["note"] == "x"


def test_diamond_graph_accumulates():
    # y = sum(tanh(x) * sigmoid(x)) uses x twice
    rng = np.random.default_rng(1)
    x = rng.normal(size=(3, 2))
    assert check(lambda t: nc.sum_(nc.mul(nc.tanh(t), nc.sigmoid(t))), [x]) <= 1e-4
