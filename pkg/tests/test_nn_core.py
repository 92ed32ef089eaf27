import numpy as np
import pytest
import scipy.sparse as sp

from leadwarn.errors import NonFiniteGradient, ShapeMismatch
from leadwarn.graph_builder import normalize_adjacency
from leadwarn.nn_core import (Adam, LSTMParams, ParamTensor, bce_loss, gcn_backward, gcn_forward,
                              gcn_layer, glorot, grad_check, lstm_step, lstm_step_backward,
                              lstm_step_forward, mean_pool, mean_pool_backward, mlp_backward,
                              mlp_forward, mlp_head, optimizer_step, zeros)

from toys import chain_grad_error


def test_gcn_identity_and_zero():
    H = np.abs(np.random.default_rng(0).normal(size=(4, 3)))
    I = sp.identity(4, format="csr")
    out = gcn_layer(H, I, ParamTensor("W", np.eye(3)), zeros("b", (3,)))
    np.testing.assert_array_equal(out, H)
    W, b = zeros("W", (3, 2)), zeros("b", (2,))
    out, cache = gcn_forward(H, I, W, b)
    assert np.all(out == 0)
    assert np.all(gcn_backward(np.ones_like(out), cache) == 0)


def test_gcn_grad():
    rng = np.random.default_rng(1)
    A = normalize_adjacency(4, [[0, 1], [1, 2], [3, 3]])
    H = ParamTensor("H", rng.normal(size=(4, 3)))
    W = glorot(rng, "W", 3, 2)
    b = ParamTensor("b", rng.normal(size=2))
    G = rng.normal(size=(4, 2))

    def fb():
        for p in (H, W, b):
            p.zero_grad()
        out, cache = gcn_forward(H.values, A, W, b)
        H.grad += gcn_backward(G, cache)
        return float(np.sum(G * out))

    assert grad_check(fb, [H, W, b]) < 1e-4


def test_mean_pool():
    np.testing.assert_array_equal(mean_pool(np.array([[1.0, 2.0]])), [1.0, 2.0])
    np.testing.assert_array_equal(mean_pool(np.array([[1.0, 3.0], [3.0, 1.0]])), [2.0, 2.0])
    np.testing.assert_allclose(mean_pool_backward(np.array([1.0, -2.0]), 4), np.tile([0.25, -0.5], (4, 1)))


def test_lstm_examples():
    p = LSTMParams(zeros("W", (3, 8)), zeros("U", (2, 8)), zeros("b", (8,)))
    h, c = lstm_step(np.ones(3), np.zeros(2), np.zeros(2), p)
    assert np.all(h == 0) and np.all(c == 0)
    rng = np.random.default_rng(2)
    p = LSTMParams.init(rng, 3, 2)
    p.b.values[2:4] = 50.0
    x, h0, c0 = rng.normal(size=3), rng.normal(size=2), rng.normal(size=2)
    _, c = lstm_step(x, h0, c0, p)
    z = x @ p.W.values + h0 @ p.U.values + p.b.values
    i = 1 / (1 + np.exp(-z[:2]))
    g = np.tanh(z[4:6])
    np.testing.assert_allclose(c, c0 + i * g, atol=1e-6)


def test_lstm_grad():
    rng = np.random.default_rng(3)
    p = LSTMParams.init(rng, 8, 8)
    for t in p.tensors():
        t.values[...] = rng.normal(scale=0.5, size=t.shape)
    x = ParamTensor("x", rng.normal(size=(2, 8)))
    h0 = ParamTensor("h0", rng.normal(size=(2, 8)))
    c0 = ParamTensor("c0", rng.normal(size=(2, 8)))
    gh, gc = rng.normal(size=(2, 8)), rng.normal(size=(2, 8))

    def fb():
        for t in p.tensors() + [x, h0, c0]:
            t.zero_grad()
        h, c, cache = lstm_step_forward(x.values, h0.values, c0.values, p)
        dx, dh, dc = lstm_step_backward(gh, gc, cache, p)
        x.grad += dx
        h0.grad += dh
        c0.grad += dc
        return float(np.sum(gh * h) + np.sum(gc * c))

    assert grad_check(fb, p.tensors() + [x, h0, c0]) < 1e-4


def test_lstm_shape_errors():
    p = LSTMParams.init(np.random.default_rng(0), 3, 2)
    with pytest.raises(ShapeMismatch):
        lstm_step(np.ones(4), np.zeros(2), np.zeros(2), p)


def mlp_layers(rng, sizes):
    return [(glorot(rng, f"W{k}", a, b), ParamTensor(f"b{k}", rng.normal(size=b) * 0.1))
            for k, (a, b) in enumerate(zip(sizes[:-1], sizes[1:]))]


def test_mlp_examples_and_grad():
    rng = np.random.default_rng(4)
    layers = mlp_layers(rng, [4, 5, 1])
    layers[-1][0].values[...] = 0
    layers[-1][1].values[...] = 0
    assert mlp_head(rng.normal(size=4), layers)[0] == 0.5
    layers = mlp_layers(rng, [4, 5, 1])
    x = rng.normal(size=(3, 4))
    last = []
    for bias in np.linspace(-3, 3, 13):
        layers[-1][1].values[...] = bias
        last.append(mlp_head(x, layers))
    assert np.all(np.diff(np.array(last), axis=0) > 0)
    g = rng.normal(size=3)
    params = [t for pair in layers for t in pair]

    def fb():
        for t in params:
            t.zero_grad()
        _, logit, caches = mlp_forward(x, layers)
        mlp_backward(g, caches)
        return float(np.sum(g * logit))

    assert grad_check(fb, params) < 1e-4


def test_bce():
    assert bce_loss(0.5, 1)[0] == pytest.approx(np.log(2), abs=1e-12)
    assert bce_loss(1.0, 1)[0] <= 1e-6 and bce_loss(0.0, 0)[0] <= 1e-6
    p = np.linspace(0.01, 0.99, 50)
    assert np.all(np.diff(bce_loss(p, np.ones(50))[0]) < 0)


def test_adam():
    w = ParamTensor("w", np.array([1.0, -2.0]))
    opt = Adam([w], lr=1e-2)
    before = w.values.copy()
    optimizer_step([w], opt)
    np.testing.assert_array_equal(w.values, before)

    w = ParamTensor("w", np.array([1.0]))
    opt = Adam([w], lr=1e-2)
    losses = []
    for _ in range(100):
        w.grad[...] = 2 * w.values
        losses.append(float(w.values[0] ** 2))
        optimizer_step([w], opt)
    assert np.all(np.diff(losses) < 0)

    def run():
        rng = np.random.default_rng(9)
        p = ParamTensor("p", rng.normal(size=5))
        o = Adam([p], lr=3e-3)
        for _ in range(20):
            p.grad[...] = rng.normal(size=5)
            o.step()
        return p.values

    assert run().tobytes() == run().tobytes()
    w.grad[...] = np.nan
    with pytest.raises(NonFiniteGradient):
        opt.step()


def test_grad_check_linear_and_negative_control():
    rng = np.random.default_rng(5)
    W = ParamTensor("W", rng.normal(size=(3, 2)))
    x = rng.normal(size=(4, 3))
    g = rng.normal(size=(4, 2))

    def fb(corrupt=0.0):
        W.zero_grad()
        W.grad += x.T @ g * (1 + corrupt)
        return float(np.sum(g * (x @ W.values)))

    assert grad_check(fb, [W]) < 1e-8
    assert grad_check(lambda: fb(0.1), [W]) > 1e-2


def test_full_chain_grad():
    assert chain_grad_error(0, "full") < 1e-4
    assert chain_grad_error(0, "baseline") < 1e-4
