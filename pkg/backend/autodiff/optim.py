"""
最佳化器與學習率排程
Adam Optimizer, Plateau Scheduler and Early Stopping

參考來源: 訓練協定使用 Adam（lr 1e-3）、驗證集停滯 10 個 epoch 時學習率減半、早停。
"""

from dataclasses import dataclass, field
from typing import Dict, Mapping

import numpy as np

from backend.autodiff.tensor import Tensor
from backend.errors import NonFiniteError, ShapeError


@dataclass
class AdamState:
    """Adam 的一階 / 二階動量與步數"""
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: AdamState
) -> Dict[str, np.ndarray]:
    """
    一次帶偏差修正的 Adam 更新

    Args:
        params: 參數名稱 → 陣列
        grads: 參數名稱 → 梯度（缺少的視為 0）
        state: AdamState（就地更新）

    Returns:
        更新後的參數字典（新陣列）
    """
    if state.lr <= 0:
        raise ValueError(f"學習率必須為正，收到 {state.lr}")

    for name, grad in grads.items():
        if not np.all(np.isfinite(grad)):
            raise NonFiniteError(f"參數 {name} 的梯度含非有限值")
        if name in params and grad.shape != params[name].shape:
            raise ShapeError(f"參數 {name} 梯度形狀 {grad.shape} 與參數 {params[name].shape} 不符")

    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    updated = {}

    for name, value in params.items():
        grad = grads.get(name)
        if grad is None:
            grad = np.zeros_like(value)
        m = state.m.get(name, np.zeros_like(value))
        v = state.v.get(name, np.zeros_like(value))
        m = b1 * m + (1.0 - b1) * grad
        v = b2 * v + (1.0 - b2) * grad * grad
        state.m[name] = m
        state.v[name] = v
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        updated[name] = value - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)

    return updated


class Adam:
    """綁定一組 Tensor 參數的 Adam"""

    def __init__(self, params: Mapping[str, Tensor], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = dict(params)
        self.state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)

    @property
    def lr(self) -> float:
        return self.state.lr

    @lr.setter
    def lr(self, value: float) -> None:
        self.state.lr = value

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def step(self) -> None:
        grads = {name: p.grad for name, p in self.params.items() if p.grad is not None}
        updated = adam_step({name: p.data for name, p in self.params.items()}, grads, self.state)
        for name, value in updated.items():
            self.params[name].data = value


def clip_grad_norm(params: Mapping[str, Tensor], max_norm: float) -> float:
    """依全域範數縮放梯度，回傳縮放前的範數；max_norm <= 0 表示不裁剪"""
    grads = [p.grad for p in params.values() if p.grad is not None]
    total = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads))) if grads else 0.0
    if max_norm > 0 and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for p in params.values():
            if p.grad is not None:
                p.grad = p.grad * scale
    return total


class PlateauScheduler:
    """
    監控指標停滯時把學習率乘上 factor

    連續 patience 個 epoch 沒有改善之後的下一個 epoch 觸發（同 ReduceLROnPlateau）。
    """

    def __init__(self, optimizer: Adam, factor: float = 0.5, patience: int = 10, min_lr: float = 0.0):
        if not 0.0 < factor < 1.0:
            raise ValueError(f"factor 必須在 (0, 1)，收到 {factor}")
        self.optimizer = optimizer
        self.factor = factor
        self.patience = patience
        self.min_lr = min_lr
        self.best = float('inf')
        self.bad_epochs = 0
        self.reductions = 0

    def step(self, metric: float) -> bool:
        """回傳這次是否降低了學習率"""
        if metric < self.best:
            self.best = metric
            self.bad_epochs = 0
            return False
        self.bad_epochs += 1
        if self.bad_epochs > self.patience:
            self.optimizer.lr = max(self.optimizer.lr * self.factor, self.min_lr)
            self.bad_epochs = 0
            self.reductions += 1
            return True
        return False


class EarlyStopping:
    """連續超過 patience 個 epoch 沒有改善就停止"""

    def __init__(self, patience: int = 20):
        self.patience = patience
        self.best = float('inf')
        self.best_epoch = -1
        self.bad_epochs = 0

    def update(self, metric: float, epoch: int) -> bool:
        """
        Returns:
            True 表示此 epoch 是新的最佳值
        """
        if metric < self.best:
            self.best = metric
            self.best_epoch = epoch
            self.bad_epochs = 0
            return True
        self.bad_epochs += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.bad_epochs > self.patience
