"""
圖讀出與預測頭
"""

import numpy as np
import pytest

from backend.autodiff.gradcheck import grad_check
from backend.autodiff.tensor import Tensor
from backend.errors import ShapeError
from backend.models.readout import VAR_FLOOR, HeadMlp, gaussian_head, graph_readout, point_head
from tests.conftest import random_tensor

N, D, H = 6, 4, 5


def test_graph_readout_value():
    h = Tensor(np.array([[[1.0, 2.0], [3.0, 4.0]]]))
    b = Tensor(np.array([[1.0, 0.0], [0.5, 2.0]]))
    np.testing.assert_allclose(graph_readout(h, b).data, [[(1.0 + 1.5) / 2, (0.0 + 8.0) / 2]])


def test_graph_readout_is_permutation_invariant(rng):
    h = rng.normal(size=(3, N, D))
    b = rng.normal(size=(N, D))
    perm = rng.permutation(N)
    np.testing.assert_allclose(
        graph_readout(Tensor(h[:, perm]), Tensor(b[perm])).data,
        graph_readout(Tensor(h), Tensor(b)).data,
        atol=1e-12,
    )


def test_graph_readout_shape_mismatch(rng):
    with pytest.raises(ShapeError):
        graph_readout(random_tensor(rng, 2, N, D), random_tensor(rng, N, D + 1))


def test_point_head_is_in_unit_interval(rng):
    out = point_head(random_tensor(rng, 7, D, scale=10.0), random_tensor(rng, 1, D), random_tensor(rng, 1))
    assert out.shape == (7,)
    assert np.all((out.data > 0) & (out.data < 1))


def test_gaussian_head_variance_floor(rng):
    mlp = HeadMlp(random_tensor(rng, H, D), random_tensor(rng, H), random_tensor(rng, 2, H), Tensor(np.array([0.0, -800.0])))
    mu, var = gaussian_head(random_tensor(rng, 4, D), mlp)
    assert mu.shape == var.shape == (4,)
    assert np.all((mu.data > 0) & (mu.data < 1))
    assert np.all(var.data >= VAR_FLOOR)


def test_gaussian_head_gradient(rng):
    mlp = HeadMlp(random_tensor(rng, H, D), random_tensor(rng, H), random_tensor(rng, 2, H), random_tensor(rng, 2))

    def f(t):
        mu, var = gaussian_head(t, mlp)
        return (mu * 3.0 + var.log()).sum()

    assert grad_check(f, rng.normal(size=(3, D))) < 1e-6
