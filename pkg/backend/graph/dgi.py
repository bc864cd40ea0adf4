"""
動態圖推論（DGI）
Dynamic Graph Inference

由節點嵌入 b_i 與視窗特徵 W_s x_i^t 計算成對邊參數 θ，再以 Gumbel-softmax 取樣可微的鄰接矩陣。

消融變體：
- full:           θ_ij = σ(g_fc((b_i + W_s x_i) || (b_j + W_s x_j)))
- no_embeddings:  θ_ij = σ(g_fc(W_s x_i || W_s x_j))
- no_features:    θ_ij = σ(g_fc(b_i || b_j))   （靜態圖）
- fcg:            不執行 DGI，使用全連接圖
"""

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from backend.autodiff.functional import concat, linear, softmax_lastdim
from backend.autodiff.tensor import Tensor, matmul
from backend.errors import ShapeError

LOGIT_VARIANTS = ('full', 'no_embeddings', 'no_features')

# Gumbel 取樣的均勻分布下界，避免 log(0)
_TINY = np.finfo(np.float64).tiny


@dataclass
class EdgeMlp:
    """g_fc：2d → hidden → 2，中間 ReLU"""
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor


def project_features(x: Tensor, W_s: Tensor) -> Tensor:
    """
    第 i 列 = W_s · x_i

    Args:
        x: (..., n, W) 視窗特徵
        W_s: (d, W)

    Returns:
        (..., n, d)
    """
    if x.shape[-1] != W_s.shape[1]:
        raise ShapeError(f"project_features: 特徵長度 {x.shape[-1]} 與 W_s {W_s.shape} 不符")
    return matmul(x, W_s.T)


def pairwise_logits(
    b: Tensor,
    xproj: Optional[Tensor],
    mlp: EdgeMlp,
    variant: str = 'full'
) -> Tensor:
    """
    成對邊參數 θ ∈ (0,1)，最後一維 k=0 表示 i→j 有邊，k=1 表示相反

    Args:
        b: (n, d) 節點嵌入
        xproj: (..., n, d) 投影後特徵；variant='no_features' 時可為 None
        mlp: g_fc 權重
        variant: 'full' / 'no_embeddings' / 'no_features'

    Returns:
        (..., n, n, 2)
    """
    if variant not in LOGIT_VARIANTS:
        raise ValueError(f"未知的 DGI 變體: {variant}")
    if variant != 'no_features' and xproj is None:
        raise ValueError(f"變體 {variant} 需要投影特徵 xproj")
    if xproj is not None and xproj.shape[-2:] != b.shape:
        raise ShapeError(f"xproj {xproj.shape} 與節點嵌入 {b.shape} 不符")

    if variant == 'full':
        u = xproj + b
    elif variant == 'no_embeddings':
        u = xproj
    else:
        u = b

    n, d = u.shape[-2], u.shape[-1]
    lead = u.shape[:-2]
    left = u.reshape(lead + (n, 1, d)).expand(lead + (n, n, d))
    right = u.reshape(lead + (1, n, d)).expand(lead + (n, n, d))
    pair = concat([left, right], axis=-1)

    hidden = linear(pair, mlp.w1, mlp.b1).relu()
    return linear(hidden, mlp.w2, mlp.b2).sigmoid()


def sample_gumbel(shape, rng: np.random.Generator) -> np.ndarray:
    """g = −log(−log U)，U ~ Uniform(0,1)"""
    u = rng.uniform(_TINY, 1.0, size=shape)
    return -np.log(-np.log(u))


def gumbel_softmax(theta: Tensor, gamma: float, noise: Optional[np.ndarray] = None) -> Tensor:
    """y_k = softmax((g_k + θ_k) / γ)，回傳兩個通道"""
    if gamma <= 0:
        raise ValueError(f"溫度 gamma 必須為正，收到 {gamma}")
    logits = theta if noise is None else theta + noise
    return softmax_lastdim(logits * (1.0 / gamma))


def gumbel_softmax_adjacency(
    theta: Tensor,
    gamma: float,
    rng: Optional[np.random.Generator] = None,
    noise: Optional[np.ndarray] = None
) -> Tensor:
    """
    以 Gumbel-softmax 取樣軟鄰接矩陣 A_ij = y_0（「有邊」通道）

    Args:
        theta: (..., n, n, 2)
        gamma: Gumbel-softmax 溫度（預設 0.05）
        rng: 提供時抽新的 Gumbel 雜訊
        noise: 直接指定雜訊（測試用）；兩者皆無時為無雜訊版本

    Returns:
        (..., n, n)
    """
    if noise is None and rng is not None:
        noise = sample_gumbel(theta.shape, rng)
    return gumbel_softmax(theta, gamma, noise)[..., 0]


def expected_adjacency(theta: Tensor, gamma: float) -> Tensor:
    """評估用的無雜訊鄰接 softmax(θ/γ)_0"""
    return gumbel_softmax_adjacency(theta, gamma)


def fully_connected_adjacency(n: int) -> Tensor:
    """非對角全為 1、對角為 0（自環由 GCN 正規化加入）"""
    if n < 2:
        raise ValueError(f"節點數必須 ≥ 2，收到 {n}")
    return Tensor(off_diagonal_mask(n))


def off_diagonal_mask(n: int) -> np.ndarray:
    return np.ones((n, n)) - np.eye(n)


def harden(adjacency: Union[Tensor, np.ndarray], threshold: float = 0.5) -> np.ndarray:
    """A_ij > threshold 記為 1（只用於匯出檢視，不進訓練路徑）"""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold 必須在 (0, 1)，收到 {threshold}")
    values = adjacency.data if isinstance(adjacency, Tensor) else np.asarray(adjacency, dtype=np.float64)
    return (values > threshold).astype(np.int64)


class DynamicGraphInference:
    """
    DGI 模組：持有 g_fc 權重並計數 θ 的計算次數

    訓練時每個視窗每一步抽一次新雜訊；評估時用無雜訊鄰接。
    """

    def __init__(self, mlp: EdgeMlp, n_nodes: int, gamma: float = 0.05, variant: str = 'full'):
        if variant not in LOGIT_VARIANTS:
            raise ValueError(f"未知的 DGI 變體: {variant}")
        self.mlp = mlp
        self.n_nodes = n_nodes
        self.gamma = gamma
        self.variant = variant
        self.logit_evaluations = 0
        self._mask = off_diagonal_mask(n_nodes)

    def edge_logits(self, b: Tensor, xproj: Optional[Tensor]) -> Tensor:
        self.logit_evaluations += 1
        return pairwise_logits(b, xproj, self.mlp, self.variant)

    def adjacency(
        self,
        b: Tensor,
        xproj: Tensor,
        training: bool,
        rng: Optional[np.random.Generator] = None
    ) -> Tensor:
        """
        Args:
            b: (n, d)
            xproj: (..., n, d)
            training: True 時抽 Gumbel 雜訊
            rng: 訓練模式必填

        Returns:
            鄰接矩陣 (..., n, n)，對角為 0；靜態圖評估時為 (n, n)
        """
        theta = self.edge_logits(b, xproj)
        if training:
            if rng is None:
                raise ValueError("訓練模式的 DGI 需要 rng")
            if self.variant == 'no_features':
                # 每個視窗各自抽樣，分布相同
                theta = theta.expand(xproj.shape[:-2] + theta.shape)
            adjacency = gumbel_softmax_adjacency(theta, self.gamma, rng=rng)
        else:
            adjacency = expected_adjacency(theta, self.gamma)
        return adjacency * self._mask
