"""
圖讀出與預測頭
Graph Readout and Prediction Heads
"""

from dataclasses import dataclass
from typing import Tuple

from backend.autodiff.functional import linear
from backend.autodiff.tensor import Tensor
from backend.errors import ShapeError

VAR_FLOOR = 1e-6


@dataclass
class HeadMlp:
    """BGN-UE 的 f_θ：d → hidden → 2"""
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor


def graph_readout(h: Tensor, b: Tensor) -> Tensor:
    """
    h_g = (1/n) Σ_i h_i ⊙ b_i

    Args:
        h: (B, n, d) 節點表示
        b: (n, d) 節點嵌入

    Returns:
        (B, d)
    """
    if h.shape[-2:] != b.shape:
        raise ShapeError(f"節點表示 {h.shape} 與節點嵌入 {b.shape} 不符")
    return (h * b).mean(axis=-2)


def point_head(h_g: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """σ(W h_g + b)，每個樣本一個 (0,1) 內的純量"""
    out = linear(h_g, weight, bias).sigmoid()
    return out.reshape(h_g.shape[:-1])


def gaussian_head(h_g: Tensor, mlp: HeadMlp) -> Tuple[Tensor, Tensor]:
    """
    高斯預測頭

    Returns:
        (mu, var)：mu = σ(o₀) 與目標同尺度，var = softplus(o₁) + 1e-6
    """
    hidden = linear(h_g, mlp.w1, mlp.b1).relu()
    out = linear(hidden, mlp.w2, mlp.b2)
    mu = out[..., 0].sigmoid()
    var = out[..., 1].softplus() + VAR_FLOOR
    return mu, var
