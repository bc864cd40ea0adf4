"""
神經網路運算測試（softmax、BatchNorm、Dropout、GRU）
"""

import numpy as np
import pytest

from backend.autodiff.functional import (
    BatchNormState,
    GruWeights,
    batchnorm,
    concat,
    dropout,
    gru_cell,
    linear,
    softmax_lastdim,
    stack,
)
from backend.autodiff.gradcheck import grad_check
from backend.autodiff.tensor import Tensor
from backend.errors import ShapeError


def _gru_weights(rng, hidden, inputs, scale=0.5, zero=False):
    def w(*shape):
        return Tensor(np.zeros(shape) if zero else rng.normal(scale=scale, size=shape))
    return GruWeights(
        W_z=w(hidden, inputs), U_z=w(hidden, hidden), b_z=w(hidden),
        W_r=w(hidden, inputs), U_r=w(hidden, hidden), b_r=w(hidden),
        W_h=w(hidden, inputs), U_h=w(hidden, hidden), b_h=w(hidden),
    )


# ========== softmax / 拼接 ==========

def test_softmax_rows_sum_to_one(rng):
    out = softmax_lastdim(Tensor(rng.normal(size=(4, 5)) * 50))
    np.testing.assert_allclose(out.data.sum(axis=-1), np.ones(4), atol=1e-12)


def test_softmax_gradient(rng):
    weights = rng.normal(size=(3, 4))
    assert grad_check(lambda t: (softmax_lastdim(t) * weights).sum(), rng.normal(size=(3, 4))) < 1e-6


def test_concat_and_stack_split_gradients():
    a = Tensor(np.ones((2, 2)), requires_grad=True)
    b = Tensor(np.ones((2, 3)), requires_grad=True)
    out = concat([a, b], axis=-1)
    assert out.shape == (2, 5)
    (out * np.arange(5.0)).sum().backward()
    np.testing.assert_allclose(a.grad, [[0.0, 1.0], [0.0, 1.0]])
    np.testing.assert_allclose(b.grad, [[2.0, 3.0, 4.0], [2.0, 3.0, 4.0]])

    c = Tensor(np.zeros(3), requires_grad=True)
    d = Tensor(np.zeros(3), requires_grad=True)
    (stack([c, d], axis=0) * np.array([[1.0], [2.0]])).sum().backward()
    np.testing.assert_allclose(d.grad, [2.0, 2.0, 2.0])


def test_linear_shape_mismatch():
    with pytest.raises(ShapeError):
        linear(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 5))))


# ========== BatchNorm ==========

def test_batchnorm_training_normalizes_columns(rng):
    x = Tensor(rng.normal(loc=3.0, scale=2.0, size=(64, 4)))
    gamma, beta = Tensor(np.ones(4)), Tensor(np.zeros(4))
    state = BatchNormState.create(4)

    out = batchnorm(x, gamma, beta, state, training=True)

    np.testing.assert_allclose(out.data.mean(axis=0), np.zeros(4), atol=1e-10)
    np.testing.assert_allclose(out.data.var(axis=0), np.ones(4), atol=1e-3)
    np.testing.assert_allclose(state.running_mean, 0.1 * x.data.mean(axis=0))
    np.testing.assert_allclose(state.running_var, 0.9 + 0.1 * x.data.var(axis=0))


def test_batchnorm_eval_uses_running_stats():
    state = BatchNormState(running_mean=np.array([1.0, -1.0]), running_var=np.array([4.0, 1.0]), eps=0.0)
    out = batchnorm(Tensor(np.array([[3.0, 0.0]])), Tensor(np.ones(2)), Tensor(np.zeros(2)), state, training=False)
    np.testing.assert_allclose(out.data, [[1.0, 1.0]])


def test_batchnorm_gradient(rng):
    gamma = Tensor(rng.normal(size=3))
    beta = Tensor(rng.normal(size=3))
    weights = rng.normal(size=(6, 3))

    def f(t):
        return (batchnorm(t, gamma, beta, BatchNormState.create(3), training=True) * weights).sum()

    assert grad_check(f, rng.normal(size=(6, 3))) < 1e-5


def test_batchnorm_rejects_single_row_in_training():
    with pytest.raises(ShapeError):
        batchnorm(Tensor(np.ones((1, 2))), Tensor(np.ones(2)), Tensor(np.zeros(2)), BatchNormState.create(2), True)


# ========== Dropout ==========

def test_dropout_is_identity_in_eval():
    x = Tensor(np.arange(6.0))
    assert dropout(x, 0.5, training=False) is x


def test_dropout_scales_survivors(rng):
    x = Tensor(np.ones(10_000))
    out = dropout(x, 0.5, training=True, rng=rng).data
    assert set(np.unique(out)) <= {0.0, 2.0}
    assert abs(out.mean() - 1.0) < 0.05


def test_dropout_arguments():
    with pytest.raises(ValueError):
        dropout(Tensor(np.ones(2)), 1.0, training=True)
    with pytest.raises(ValueError):
        dropout(Tensor(np.ones(2)), 0.5, training=True, rng=None)


# ========== GRU ==========

def test_gru_cell_with_zero_weights_halves_state(rng):
    weights = _gru_weights(rng, hidden=3, inputs=2, zero=True)
    h = Tensor(np.array([[2.0, -4.0, 1.0]]))
    out = gru_cell(Tensor(np.ones((1, 2))), h, weights)
    # z = 0.5、候選狀態 tanh(0) = 0
    np.testing.assert_allclose(out.data, 0.5 * h.data)


def test_gru_cell_gradient_wrt_input_and_state(rng):
    weights = _gru_weights(rng, hidden=3, inputs=2)
    h0 = rng.normal(size=(4, 3))
    x0 = rng.normal(size=(4, 2))
    assert grad_check(lambda x: gru_cell(x, Tensor(h0), weights).sum(), x0) < 1e-6
    assert grad_check(lambda h: (gru_cell(Tensor(x0), h, weights) ** 2).sum(), h0) < 1e-6


def test_gru_cell_shape_mismatch(rng):
    weights = _gru_weights(rng, hidden=3, inputs=2)
    with pytest.raises(ShapeError):
        gru_cell(Tensor(np.ones((1, 5))), Tensor(np.zeros((1, 3))), weights)
