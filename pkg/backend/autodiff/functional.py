"""
張量函數庫
Functional Primitives

模型各模組共用的運算：softmax、拼接、BatchNorm、Dropout、GRU 單元等。
"""

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from backend.autodiff.tensor import Tensor, matmul
from backend.errors import ShapeError


def sigmoid(x: Tensor) -> Tensor:
    return Tensor._lift(x).sigmoid()


def relu(x: Tensor) -> Tensor:
    return Tensor._lift(x).relu()


def softplus(x: Tensor) -> Tensor:
    return Tensor._lift(x).softplus()


def softmax_lastdim(x: Tensor) -> Tensor:
    """最後一維 softmax，先減最大值避免溢位"""
    x = Tensor._lift(x)
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return Tensor._from_op(y, (x,), 'softmax', backward)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    """沿指定軸拼接；反向時把梯度切回各輸入"""
    tensors = [Tensor._lift(t) for t in tensors]
    ndim = tensors[0].ndim
    axis = axis % ndim
    for t in tensors[1:]:
        if t.ndim != ndim or any(t.shape[d] != tensors[0].shape[d] for d in range(ndim) if d != axis):
            raise ShapeError(f"concat 形狀不符: {[t.shape for t in tensors]}")
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    data = np.concatenate([t.data for t in tensors], axis=axis)
    return Tensor._from_op(data, tuple(tensors), 'concat', backward)


def concat_lastdim(a: Tensor, b: Tensor) -> Tensor:
    return concat([a, b], axis=-1)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [Tensor._lift(t) for t in tensors]
    shape = tensors[0].shape
    if any(t.shape != shape for t in tensors):
        raise ShapeError(f"stack 形狀不符: {[t.shape for t in tensors]}")
    axis = axis % (len(shape) + 1)

    def backward(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    data = np.stack([t.data for t in tensors], axis=axis)
    return Tensor._from_op(data, tuple(tensors), 'stack', backward)


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """y = x Wᵀ + b，weight 形狀為 (out, in)"""
    if x.shape[-1] != weight.shape[-1]:
        raise ShapeError(f"linear 輸入維度 {x.shape[-1]} 與權重 {weight.shape} 不符")
    out = matmul(x, weight.T)
    return out + bias if bias is not None else out


# ========== BatchNorm ==========

@dataclass
class BatchNormState:
    """BatchNorm 的滑動統計量（不參與梯度）"""
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.1
    eps: float = 1e-5

    @classmethod
    def create(cls, features: int) -> 'BatchNormState':
        return cls(np.zeros(features), np.ones(features))


def batchnorm(x: Tensor, gamma: Tensor, beta: Tensor, state: BatchNormState, training: bool) -> Tensor:
    """
    對 (B, F) 的每個特徵欄做正規化

    訓練模式用母體變異數（有偏）並更新滑動統計；評估模式只用滑動統計。
    """
    if x.ndim != 2:
        raise ShapeError(f"batchnorm 需要 (B, F) 輸入，收到 {x.shape}")
    if x.shape[1] != gamma.shape[0] or gamma.shape != beta.shape:
        raise ShapeError(f"batchnorm 參數形狀不符: x={x.shape} gamma={gamma.shape} beta={beta.shape}")

    if training:
        if x.shape[0] < 2:
            raise ShapeError("batchnorm 訓練模式需要至少 2 列")
        mean = x.mean(axis=0, keepdims=True)
        centered = x - mean
        var = (centered * centered).mean(axis=0, keepdims=True)
        normalized = centered / (var + state.eps).sqrt()

        m = state.momentum
        state.running_mean = (1.0 - m) * state.running_mean + m * mean.data.reshape(-1)
        state.running_var = (1.0 - m) * state.running_var + m * var.data.reshape(-1)
    else:
        scale = 1.0 / np.sqrt(state.running_var + state.eps)
        normalized = (x - state.running_mean) * scale

    return normalized * gamma + beta


def dropout(x: Tensor, p: float, training: bool, rng: Optional[np.random.Generator] = None) -> Tensor:
    """反向 dropout：訓練時存活元素乘 1/(1-p)，評估時恆等"""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout 機率必須在 [0, 1)，收到 {p}")
    if not training or p == 0.0:
        return x
    if rng is None:
        raise ValueError("訓練模式的 dropout 需要 rng")
    keep = (rng.random(x.shape) >= p).astype(np.float64) / (1.0 - p)
    return x * keep


# ========== GRU ==========

@dataclass
class GruWeights:
    """GRU 單元的權重（W: hidden×input，U: hidden×hidden）"""
    W_z: Tensor
    U_z: Tensor
    b_z: Tensor
    W_r: Tensor
    U_r: Tensor
    b_r: Tensor
    W_h: Tensor
    U_h: Tensor
    b_h: Tensor
    hidden_size: int = field(init=False)
    input_size: int = field(init=False)

    def __post_init__(self):
        self.hidden_size, self.input_size = self.W_z.shape


def gru_cell(x: Tensor, h: Tensor, weights: GruWeights) -> Tensor:
    """
    z = σ(W_z x + U_z h + b_z)
    r = σ(W_r x + U_r h + b_r)
    h̃ = tanh(W_h x + U_h (r ⊙ h) + b_h)
    h' = (1 − z) ⊙ h + z ⊙ h̃
    """
    if x.shape[-1] != weights.input_size or h.shape[-1] != weights.hidden_size:
        raise ShapeError(
            f"gru_cell 形狀不符: x={x.shape} h={h.shape} "
            f"(input={weights.input_size}, hidden={weights.hidden_size})"
        )
    z = (linear(x, weights.W_z) + linear(h, weights.U_z) + weights.b_z).sigmoid()
    r = (linear(x, weights.W_r) + linear(h, weights.U_r) + weights.b_r).sigmoid()
    candidate = (linear(x, weights.W_h) + linear(r * h, weights.U_h) + weights.b_h).tanh()
    return (1.0 - z) * h + z * candidate
