import math

import numpy as np
import pytest

from oracles import conv_oracle

from dancegen.exceptions import CheckpointError, InvalidInputError, ShapeError, StateError
from dancegen.nn import (ELU, LSTM, BatchNorm, Conv2D, Linear, check_gradients, elu, grad_check,
                         numeric_gradient, read_arrays, relative_error, write_arrays)
from dancegen.selfcheck import layer_checks, network_check


def sig(v):
    return 1.0 / (1.0 + math.exp(-v))


# -- forward oracles ---------------------------------------------------------

def test_conv_matches_nested_loops():
    rng = np.random.default_rng(0)
    conv = Conv2D(2, 3, (3, 2), rng)
    conv.params["bias"][...] = rng.standard_normal(3)
    x = rng.standard_normal((2, 6, 4, 2))
    out = conv.forward(x)
    assert out.shape == (2, 4, 3, 3)
    np.testing.assert_allclose(out, conv_oracle(x, conv.params["weight"], conv.params["bias"]), atol=1e-12)


def test_conv_shape_errors():
    conv = Conv2D(1, 2, (3, 2))
    with pytest.raises(ShapeError):
        conv.forward(np.zeros((1, 5, 3, 2)))
    with pytest.raises(ShapeError):
        conv.forward(np.zeros((1, 2, 3, 1)))


def test_full_conv_stack_output_shape():
    # four valid 3x2 convolutions take an 81x5 block to 73x1
    x = np.zeros((1, 81, 5, 1))
    for cin, cout in [(1, 16), (16, 32), (32, 64), (64, 65)]:
        x = Conv2D(cin, cout, (3, 2), 0).forward(x)
    assert x.shape == (1, 73, 1, 65)


def test_batchnorm_train_literal():
    rng = np.random.default_rng(1)
    x = rng.normal(2.0, 3.0, (5, 4, 2, 3))
    bn = BatchNorm(3)
    bn.params["gamma"][...] = [1.0, 2.0, 0.5]
    bn.params["beta"][...] = [0.0, -1.0, 3.0]
    out = bn.forward(x)
    for c in range(3):
        vals = x[..., c].ravel()
        mu = sum(vals) / len(vals)
        var = sum((v - mu) ** 2 for v in vals) / len(vals)
        expect = bn.params["gamma"][c] * (x[..., c] - mu) / math.sqrt(var + 1e-5) + bn.params["beta"][c]
        np.testing.assert_allclose(out[..., c], expect, atol=1e-12)
        assert math.isclose(bn.buffers["running_mean"][c], 0.1 * mu, rel_tol=1e-12)
        assert math.isclose(bn.buffers["running_var"][c], 0.9 + 0.1 * var, rel_tol=1e-12)


def test_batchnorm_infer_uses_running_stats():
    bn = BatchNorm(2)
    bn.mode = "infer"
    bn.buffers["running_mean"] = np.array([1.0, -1.0])
    bn.buffers["running_var"] = np.array([4.0, 1.0])
    out = bn.forward(np.array([[3.0, 0.0]]))
    np.testing.assert_allclose(out, [[2.0 / math.sqrt(4 + 1e-5), 1.0 / math.sqrt(1 + 1e-5)]])


def test_batchnorm_train_needs_two_samples_and_known_mode():
    with pytest.raises(InvalidInputError):
        BatchNorm(2).forward(np.zeros((1, 2)))
    bn = BatchNorm(2)
    bn.mode = "eval"
    with pytest.raises(StateError):
        bn.forward(np.zeros((3, 2)))


def test_elu_values():
    x = np.array([-2.0, -0.5, 0.0, 1.5])
    np.testing.assert_allclose(elu(x), [math.exp(-2) - 1, math.exp(-0.5) - 1, 0.0, 1.5])
    np.testing.assert_allclose(ELU().forward(x), elu(x))


def test_linear_forward():
    lin = Linear(2, 3, 0)
    lin.params["weight"][...] = [[1, 2, 3], [4, 5, 6]]
    lin.params["bias"][...] = [0.5, 0, -0.5]
    np.testing.assert_allclose(lin.forward(np.array([[1.0, -1.0]])), [[-2.5, -3.0, -3.5]])


def test_lstm_step_matches_scalar_equations():
    rng = np.random.default_rng(2)
    D, H = 3, 2
    lstm = LSTM(D, H, rng=rng)
    lstm.params["b"][...] = rng.standard_normal(4 * H)
    x = rng.standard_normal((1, D))
    h = rng.standard_normal((1, H))
    c = rng.standard_normal((1, H))
    h_new, c_new, _ = lstm.step(x, h, c)
    Wx, Wh, b = lstm.params["Wx"], lstm.params["Wh"], lstm.params["b"]
    for u in range(H):
        def pre(gate):
            col = gate * H + u
            return (sum(x[0, d] * Wx[d, col] for d in range(D))
                    + sum(h[0, k] * Wh[k, col] for k in range(H)) + b[col])
        i, f, o, g = sig(pre(0)), sig(pre(1)), sig(pre(2)), math.tanh(pre(3))
        cu = f * c[0, u] + i * g
        assert math.isclose(c_new[0, u], cu, rel_tol=1e-12)
        assert math.isclose(h_new[0, u], o * math.tanh(cu), rel_tol=1e-12)


def test_lstm_init_forget_bias_and_bounds():
    lstm = LSTM(16, 4, rng=0)
    b = lstm.params["b"]
    assert np.all(b[4:8] == 1.0) and np.all(b[:4] == 0) and np.all(b[8:] == 0)
    assert np.max(np.abs(lstm.params["Wx"])) <= 1 / 4
    assert np.max(np.abs(lstm.params["Wh"])) <= 1 / 2


def test_lstm_sequence_equals_steps():
    rng = np.random.default_rng(3)
    lstm = LSTM(3, 4, rng=rng)
    X = rng.standard_normal((5, 2, 3))
    out, (h_last, _) = lstm.forward_sequence(X)
    h, c = lstm.initial_state(2)
    for t in range(5):
        h, c, _ = lstm.step(X[t], h, c)
        np.testing.assert_allclose(out[t], h, atol=1e-14)
    np.testing.assert_allclose(h_last, h, atol=1e-14)


def test_backward_without_forward_is_state_error():
    with pytest.raises(StateError):
        Linear(2, 2, 0).backward(np.zeros((1, 2)))
    with pytest.raises(StateError):
        LSTM(2, 2, rng=0).step_backward(np.zeros((1, 2)), np.zeros((1, 2)), None)


# -- gradient checks ---------------------------------------------------------

def test_relative_error_floor():
    assert relative_error(np.array([0.0, 1.0]), np.array([0.0, 1.0])) == 0.0
    # an entry tiny next to the array's scale is judged against 1% of that scale
    assert relative_error(np.array([1e-12, 1.0]), np.array([0.0, 1.0])) == pytest.approx(1e-10)


def test_numeric_gradient_of_quadratic():
    x = np.array([1.0, -2.0, 3.0])
    g = numeric_gradient(lambda: float(np.sum(x ** 2)), x)
    np.testing.assert_allclose(g, 2 * x, rtol=1e-8)
    np.testing.assert_array_equal(x, [1.0, -2.0, 3.0])  # restored


def test_every_layer_passes_gradcheck():
    for report in layer_checks():
        assert report.passed, report.line()
        assert report.max_error <= 1e-4


def test_full_graph_passes_gradcheck():
    report = network_check("auto")
    assert report.passed, report.line()


def test_corrupted_backward_is_caught(monkeypatch):
    original = Linear.backward

    def broken(self, dout):
        dx = original(self, dout)
        self.grads["weight"] *= 1.01
        return dx

    monkeypatch.setattr(Linear, "backward", broken)
    rng = np.random.default_rng(0)
    report = grad_check(Linear(4, 3, rng), rng.standard_normal((2, 4)), rng=rng)
    assert not report.passed
    assert "FAIL" in report.line()


def test_check_gradients_reports_each_array():
    w = np.array([1.0, 2.0])
    rep = check_gradients(lambda: float(np.sum(w ** 3)), {"w": 3 * w ** 2}, {"w": w}, "cube")
    assert set(rep.errors) == {"w"} and rep.passed


# -- container ---------------------------------------------------------------

def test_container_roundtrip(tmp_path):
    arrays = {"a": np.arange(6, dtype=np.float32).reshape(2, 3), "b": np.array([1, -2], dtype=np.int8)}
    path = write_arrays(tmp_path / "x.bin", arrays, {"k": [1, 2]})
    got, meta = read_arrays(path)
    assert meta == {"k": [1, 2]}
    for k, v in arrays.items():
        assert got[k].dtype == v.dtype and np.array_equal(got[k], v)


def test_container_detects_corruption(tmp_path):
    path = write_arrays(tmp_path / "x.bin", {"a": np.arange(100.0)})
    data = bytearray(path.read_bytes())
    data[-5] ^= 0xFF
    path.write_bytes(bytes(data))
    with pytest.raises(CheckpointError):
        read_arrays(path)


def test_container_rejects_foreign_file(tmp_path):
    p = tmp_path / "junk.bin"
    p.write_bytes(b"not a container at all")
    with pytest.raises(CheckpointError):
        read_arrays(p)
    with pytest.raises(CheckpointError):
        read_arrays(tmp_path / "missing.bin")
