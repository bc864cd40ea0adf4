"""
MSE 與高斯 NLL 損失
"""

import numpy as np
import pytest

from backend.autodiff.gradcheck import grad_check
from backend.autodiff.tensor import Tensor
from backend.errors import ShapeError
from backend.scoring.losses import gaussian_nll_loss, mse_loss


def test_mse_value():
    loss = mse_loss(Tensor(np.array([0.5, 0.5])), np.array([0.0, 1.0]))
    assert loss.item() == pytest.approx(0.25)
    np.testing.assert_allclose(loss.terms.data, [0.25, 0.25])


def test_mse_matches_reference_loop(rng):
    for _ in range(100):
        n = int(rng.integers(1, 20))
        pred, target = rng.uniform(size=n), rng.uniform(size=n)
        expected = sum((p - t) ** 2 for p, t in zip(pred, target)) / n
        assert abs(mse_loss(Tensor(pred), target).item() - expected) < 1e-12


def test_gaussian_nll_values():
    assert gaussian_nll_loss(Tensor([0.0]), Tensor([1.0]), [0.0]).item() == pytest.approx(0.0)
    assert gaussian_nll_loss(Tensor([0.0]), Tensor([1.0]), [1.0]).item() == pytest.approx(0.5)
    # 兩項相加（總和，不是平均）
    loss = gaussian_nll_loss(Tensor([0.0, 0.0]), Tensor([1.0, 1.0]), [1.0, 1.0])
    assert loss.item() == pytest.approx(1.0)


def test_gaussian_nll_matches_reference_loop(rng):
    for _ in range(100):
        n = int(rng.integers(1, 20))
        mu, target = rng.uniform(size=n), rng.uniform(size=n)
        var = rng.uniform(0.01, 2.0, size=n)
        expected = sum(0.5 * np.log(v) + (t - m) ** 2 / (2 * v) for m, v, t in zip(mu, var, target))
        assert abs(gaussian_nll_loss(Tensor(mu), Tensor(var), target).item() - expected) < 1e-12


def test_nll_is_minimized_at_squared_error():
    grid = np.linspace(0.01, 1.0, 991)
    losses = [gaussian_nll_loss(Tensor([0.2]), Tensor([v]), [0.7]).item() for v in grid]
    assert grid[int(np.argmin(losses))] == pytest.approx(0.25, abs=1e-3)


def test_loss_gradients(rng):
    target = rng.uniform(size=5)
    var = Tensor(rng.uniform(0.1, 1.0, size=5))
    assert grad_check(lambda p: mse_loss(p, target).value, rng.uniform(size=5)) < 1e-6
    assert grad_check(lambda m: gaussian_nll_loss(m, var, target).value, rng.uniform(size=5)) < 1e-6
    mu = Tensor(rng.uniform(size=5))
    assert grad_check(lambda v: gaussian_nll_loss(mu, v, target).value, rng.uniform(0.2, 1.0, size=5)) < 1e-6


def test_loss_validation():
    with pytest.raises(ShapeError):
        mse_loss(Tensor(np.zeros(3)), np.zeros(2))
    with pytest.raises(ShapeError):
        mse_loss(Tensor(np.zeros(0)), np.zeros(0))
    with pytest.raises(ValueError):
        gaussian_nll_loss(Tensor([0.0]), Tensor([0.0]), [0.0])
    with pytest.raises(ShapeError):
        gaussian_nll_loss(Tensor([0.0, 1.0]), Tensor([1.0]), [0.0, 1.0])
