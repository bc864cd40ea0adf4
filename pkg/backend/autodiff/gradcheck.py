"""
梯度檢查
Finite-difference Gradient Check
"""

from typing import Callable

import numpy as np

from backend.autodiff.tensor import Tensor


def numeric_gradient(f: Callable[[Tensor], Tensor], x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """中央差分 (f(x+h) − f(x−h)) / 2h"""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    grad_flat = grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + h
        plus = f(Tensor(x)).item()
        flat[i] = original - h
        minus = f(Tensor(x)).item()
        flat[i] = original
        grad_flat[i] = (plus - minus) / (2.0 * h)
    return grad


def grad_check(f: Callable[[Tensor], Tensor], x, h: float = 1e-5) -> float:
    """
    比較自動微分與中央差分

    Args:
        f: 輸入 Tensor、回傳純量 Tensor 的函數
        x: 檢查點
        h: 差分步長

    Returns:
        max_i |Δ_i| / max(1, |g_i|)
    """
    if h <= 0:
        raise ValueError("h 必須為正")
    x = np.array(x.data if isinstance(x, Tensor) else x, dtype=np.float64)

    leaf = Tensor(x, requires_grad=True)
    out = f(leaf)
    out.backward()
    analytic = leaf.grad if leaf.grad is not None else np.zeros_like(x)

    numeric = numeric_gradient(f, x, h)
    error = np.abs(numeric - analytic) / np.maximum(1.0, np.abs(analytic))
    return float(error.max()) if error.size else 0.0
