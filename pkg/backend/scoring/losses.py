"""
訓練損失
Training Losses

- mse_loss:          (1/β) Σ (y_p − y)²
- gaussian_nll_loss: Σ [log σ²/2 + (y − μ)²/(2σ²)]（常數項省略）

兩者皆在正規化單位計算；MSE 取平均、NLL 取總和，訓練器可再用 nll_reduction 除以批次大小。
"""

from dataclasses import dataclass

import numpy as np

from backend.autodiff.tensor import Tensor
from backend.errors import ShapeError


@dataclass
class LossValue:
    """純量損失與逐樣本項"""
    value: Tensor
    terms: Tensor

    def item(self) -> float:
        return self.value.item()


def _check_pair(pred: Tensor, target: Tensor, name: str) -> None:
    if pred.shape != target.shape:
        raise ShapeError(f"{name}: 預測 {pred.shape} 與目標 {target.shape} 長度不符")
    if pred.size == 0:
        raise ShapeError(f"{name}: 樣本數為 0")


def mse_loss(pred: Tensor, target) -> LossValue:
    target = Tensor._lift(target)
    _check_pair(pred, target, 'mse_loss')
    diff = pred - target
    terms = diff * diff
    return LossValue(terms.mean(), terms)


def gaussian_nll_loss(mu: Tensor, var: Tensor, target) -> LossValue:
    """
    高斯負對數似然（總和）

    Raises:
        ValueError: var 含非正值
    """
    target = Tensor._lift(target)
    _check_pair(mu, target, 'gaussian_nll_loss')
    if var.shape != mu.shape:
        raise ShapeError(f"gaussian_nll_loss: var {var.shape} 與 mu {mu.shape} 不符")
    if np.any(var.data <= 0):
        raise ValueError("gaussian_nll_loss: 變異數必須為正")
    diff = target - mu
    terms = var.log() * 0.5 + diff * diff / (var * 2.0)
    return LossValue(terms.sum(), terms)
