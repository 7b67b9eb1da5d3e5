import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from usersim.errors import ContractError, NumericError, ShapeError
from usersim.nn import (
    DenseParams,
    ParameterStore,
    Tensor,
    adam_step,
    backward,
    dense_forward,
    grad_check,
    gru_encode,
    gru_step,
    gru_view,
    init_dense,
    init_gru,
    softmax,
)
from usersim.nn import tensor as T

finite = st.floats(-30, 30, allow_nan=False, allow_infinity=False)


def dense(w, b, act="identity"):
    return DenseParams(Tensor(np.array(w, float)), Tensor(np.array(b, float)), act)


# dense ------------------------------------------------------------------

def test_dense_zero_weights_tanh():
    out = dense_forward(np.array([0.4, -2.0, 7.0]), dense(np.zeros((2, 3)), np.zeros(2), "tanh"))
    assert np.array_equal(out.data, np.zeros(2))


def test_dense_identity():
    out = dense_forward(np.array([0.3, -0.7]), dense(np.eye(2), np.zeros(2)))
    assert np.array_equal(out.data, [0.3, -0.7])


def test_dense_hand_value():
    out = dense_forward(np.array([1.0, 1.0]), dense([[1, 2], [0, -1]], [0.5, 0]))
    assert np.array_equal(out.data, [3.5, -1.0])


def test_dense_shape_error():
    with pytest.raises(ShapeError):
        dense_forward(np.ones(3), dense(np.eye(2), np.zeros(2)))


def test_init_range_and_zero_bias():
    store = ParameterStore()
    init_dense(store, "d", np.random.default_rng(0), 16, 4)
    w = store["d.weight"].data
    assert w.shape == (4, 16)
    assert np.all(np.abs(w) <= 1 / 4)
    assert np.array_equal(store["d.bias"].data, np.zeros(4))


# GRU --------------------------------------------------------------------

def zero_gru(hidden=2, in_dim=3):
    store = ParameterStore()
    init_gru(store, "g", np.random.default_rng(0), in_dim, hidden)
    for name in store:
        store[name].data[...] = 0.0
    return store


def test_gru_zero_case():
    p = gru_view(zero_gru().frozen(), "g")
    assert np.array_equal(gru_step(np.zeros(2), np.ones(3), p).data, np.zeros(2))


def test_gru_zero_weights_halves_state():
    p = gru_view(zero_gru().frozen(), "g")
    v = np.array([0.8, -0.4])
    assert np.allclose(gru_step(v, np.ones(3), p).data, 0.5 * v, atol=0, rtol=1e-15)


def hand_gru(h, x, w):
    """Scalar-loop evaluation of the standard gate equations."""
    sig = lambda a: 1.0 / (1.0 + math.exp(-a))  # noqa: E731
    H, D = len(h), len(x)

    def lin(W, U, b, hv, i):
        return sum(W[i][j] * x[j] for j in range(D)) + sum(U[i][j] * hv[j] for j in range(H)) + b[i]

    z = [sig(lin(w["w_z"], w["u_z"], w["b_z"], h, i)) for i in range(H)]
    r = [sig(lin(w["w_r"], w["u_r"], w["b_r"], h, i)) for i in range(H)]
    rh = [r[i] * h[i] for i in range(H)]
    c = [math.tanh(lin(w["w_h"], w["u_h"], w["b_h"], rh, i)) for i in range(H)]
    return [(1 - z[i]) * h[i] + z[i] * c[i] for i in range(H)]


def test_gru_matches_hand_evaluation():
    store = ParameterStore()
    init_gru(store, "g", np.random.default_rng(11), 3, 2)
    rng = np.random.default_rng(5)
    for name in store:  # non-zero biases too
        store[name].data[...] = rng.uniform(-1, 1, store[name].data.shape)
    w = {n.split(".")[1]: store[n].data.tolist() for n in store}
    h = [0.3, -0.6]
    x = [0.5, -1.0, 0.25]
    got = gru_step(np.array(h), np.array(x), gru_view(store.frozen(), "g")).data
    assert np.allclose(got, hand_gru(h, x, w), rtol=0, atol=1e-14)


def test_gru_shapes():
    p = gru_view(zero_gru().frozen(), "g")
    with pytest.raises(ShapeError):
        gru_step(np.zeros(3), np.ones(3), p)
    with pytest.raises(ShapeError):
        gru_step(np.zeros(2), np.ones(4), p)


def test_gru_encode_batch():
    store = ParameterStore()
    init_gru(store, "g", np.random.default_rng(0), 3, 4)
    xs = [np.random.default_rng(i).normal(size=(5, 3)) for i in range(3)]
    h = gru_encode(xs, gru_view(store.frozen(), "g"))
    assert h.shape == (5, 4)


# softmax ----------------------------------------------------------------

def test_softmax_uniform():
    assert np.allclose(softmax(np.zeros(4)).data, 0.25, rtol=0, atol=1e-15)


def test_softmax_hand_value():
    p = softmax(np.array([1.0, 1.0, 0.0, 0.0])).data
    e = math.e
    assert p[0] == pytest.approx(e / (2 * e + 2), abs=1e-15)
    assert p[2] == pytest.approx(1 / (2 * e + 2), abs=1e-15)
    assert p[0] + p[1] == pytest.approx(1 / (1 + math.exp(-1)), abs=1e-15)
    assert p[0] == pytest.approx(0.36552, abs=1e-5)
    assert p[2] == pytest.approx(0.13447, abs=1e-5)


def test_softmax_empty():
    with pytest.raises(ShapeError):
        softmax(np.zeros(0))


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.integers(1, 8), elements=finite), st.floats(-500, 500))
def test_softmax_distribution_and_shift(logits, c):
    p = softmax(logits).data
    assert np.all(p > 0)
    assert abs(p.sum() - 1) < 1e-12
    assert np.allclose(softmax(logits + c).data, p, rtol=0, atol=1e-12)


# backward ---------------------------------------------------------------

def test_backward_quadratic():
    store = ParameterStore()
    store.add("w", [1.0, -2.0])
    store.add("unused", [3.0])
    backward(T.sum_(T.square(store["w"])))
    assert np.array_equal(store.grad("w"), [2.0, -4.0])
    assert np.array_equal(store.grad("unused"), [0.0])


def test_backward_rejects_non_scalar():
    store = ParameterStore()
    store.add("w", [1.0, -2.0])
    with pytest.raises(ContractError):
        backward(T.square(store["w"]))
    with pytest.raises(ContractError):
        backward(3.0)


def test_backward_accumulates_shared_use():
    store = ParameterStore()
    w = store.add("w", [1.5])
    backward(T.sum_(T.mul(w, w) + w))
    assert store.grad("w")[0] == pytest.approx(4.0)


def test_log_floor_has_zero_gradient_below_floor():
    store = ParameterStore()
    x = store.add("x", [1e-20, 0.5])
    backward(T.sum_(T.log(x, floor=1e-12)))
    assert store.grad("x")[0] == 0.0
    assert store.grad("x")[1] == pytest.approx(2.0)


def test_ops_gradcheck():
    rng = np.random.default_rng(3)
    store = ParameterStore()
    store.add("a", rng.normal(size=(3, 4)))
    store.add("w", rng.normal(size=(2, 4)))
    store.add("b", rng.normal(size=2))

    def forward():
        a, w, b = store["a"], store["w"], store["b"]
        y = T.add(T.matmul(a, w), b)
        z = T.concat([T.tanh(y), T.sigmoid(y)], axis=-1)
        p = softmax(z)
        picked = T.take_rows(p, np.array([0, 3, 1]))
        return T.mean(T.log(picked)) - T.mean(T.square(T.getitem(a, (slice(None), 1))))

    assert grad_check(forward, store) < 1e-8


def test_grad_check_quadratic_is_exact():
    store = ParameterStore()
    store.add("w", np.random.default_rng(0).normal(size=5))
    assert grad_check(lambda: T.sum_(T.square(store["w"])), store) < 1e-10


def test_grad_check_gru_decoder_composite():
    rng = np.random.default_rng(1)
    store = ParameterStore()
    init_gru(store, "g", rng, 3, 4)
    init_dense(store, "d", rng, 4, 2)
    xs = [rng.normal(size=(2, 3)) for _ in range(3)]
    target = rng.uniform(-0.5, 0.5, size=(2, 2))

    def forward():
        h = gru_encode(xs, gru_view(dict(store.items()), "g"))
        y = dense_forward(h, DenseParams(store["d.weight"], store["d.bias"], "tanh"))
        return T.mean(T.square(T.sub(y, target)))

    assert grad_check(forward, store) < 1e-6


def test_backward_is_deterministic():
    def run():
        store = ParameterStore()
        init_dense(store, "d", np.random.default_rng(2), 3, 3)
        x = np.random.default_rng(9).normal(size=(4, 3))
        loss = T.mean(T.square(dense_forward(x, DenseParams(store["d.weight"], store["d.bias"],
                                                            "tanh"))))
        backward(loss)
        return store.grad("d.weight").copy()

    assert np.array_equal(run(), run())


# Adam -------------------------------------------------------------------

def test_adam_first_step_closed_form():
    store = ParameterStore()
    store.add("theta", [0.0])
    store["theta"].grad[:] = 0.5
    adam_step(store, 0.001, 0.9, 0.999, 1e-8)
    expected = -0.001 * 0.5 / (0.5 + 1e-8)
    assert store["theta"].data[0] == pytest.approx(expected, rel=1e-14)
    assert store["theta"].data[0] == pytest.approx(-0.001 * (1 - 2e-8), rel=1e-12)
    assert np.array_equal(store.grad("theta"), [0.0])
    assert store.adam_state("theta").step == 1


def adam_oracle(theta, grads, lr=0.001, b1=0.9, b2=0.999, eps=1e-8):
    m = v = 0.0
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        theta -= lr * (m / (1 - b1 ** t)) / (math.sqrt(v / (1 - b2 ** t)) + eps)
    return theta, m, v


@pytest.mark.parametrize("grads", [[0.3, 0.3], [-1.2, 0.7, 0.05], [2.0, -2.0, 2.0, -2.0]])
def test_adam_matches_recurrence(grads):
    store = ParameterStore()
    store.add("theta", [0.25])
    for g in grads:
        store["theta"].grad[:] = g
        adam_step(store)
    theta, m, v = adam_oracle(0.25, grads)
    assert store["theta"].data[0] == pytest.approx(theta, rel=1e-14, abs=1e-16)
    state = store.adam_state("theta")
    assert state.m[0] == pytest.approx(m, rel=1e-14)
    assert state.v[0] == pytest.approx(v, rel=1e-14)
    assert state.step == len(grads)


def test_adam_zero_gradient_leaves_value_and_decays_moments():
    store = ParameterStore()
    store.add("theta", [0.5])
    store["theta"].grad[:] = 1.0
    adam_step(store)
    before = store["theta"].data.copy()
    m, v = store.adam_state("theta").m.copy(), store.adam_state("theta").v.copy()
    adam_step(store)  # grads were cleared, so this step sees zero
    assert np.array_equal(store["theta"].data, before)
    assert np.allclose(store.adam_state("theta").m, 0.9 * m, rtol=1e-15)
    assert np.allclose(store.adam_state("theta").v, 0.999 * v, rtol=1e-15)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.integers(1, 6), elements=finite))
def test_adam_zero_gradient_never_moves(values):
    store = ParameterStore()
    store.add("p", values)
    for _ in range(3):
        adam_step(store)
    assert np.array_equal(store["p"].data, values)


def test_adam_non_finite_gradient_names_parameter():
    store = ParameterStore()
    store.add("good", [1.0])
    store.add("bad", [1.0, 2.0])
    store["bad"].grad[1] = np.nan
    with pytest.raises(NumericError, match="bad"):
        adam_step(store)
    assert store["good"].data[0] == 1.0


def test_adam_rejects_non_positive_lr():
    store = ParameterStore()
    store.add("p", [1.0])
    with pytest.raises(ContractError):
        adam_step(store, lr=0.0)


def test_store_load_checks_shapes():
    store = ParameterStore()
    store.add("p", np.zeros((2, 2)))
    with pytest.raises(ContractError):
        store.load({"p": np.zeros(3)})
    with pytest.raises(ContractError):
        store.load({})
    store.load({"p": np.ones((2, 2))})
    assert np.array_equal(store["p"].data, np.ones((2, 2)))


def test_frozen_views_share_data_without_gradients():
    store = ParameterStore()
    store.add("p", [2.0])
    frozen = store.frozen()
    assert not frozen["p"].requires_grad
    backward(T.sum_(T.square(frozen["p"])) + T.sum_(store["p"]))
    assert store.grad("p")[0] == 1.0
