"""
Grapher：GCN 區塊 + 雙層 GRU
Grapher: stacked GCN blocks and a double-stacked GRU

每個視窗的動態圖先經兩個 GNN 區塊（GCN → BatchNorm → Dropout）編碼，
兩個區塊的輸出沿特徵軸拼接成 2d，再由 GRU 沿 S 個視窗傳遞。
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from backend.autodiff.functional import (
    BatchNormState,
    GruWeights,
    batchnorm,
    concat,
    dropout,
    gru_cell,
    linear,
    stack,
)
from backend.autodiff.rng import RngStreams
from backend.autodiff.tensor import Tensor, matmul
from backend.errors import NonFiniteError, ShapeError

ABLATIONS = ('none', 'fcg', 'no_embeddings', 'no_features', 'no_gnn', 'no_rnn')


@dataclass
class GnnBlockParams:
    """單層 GCN 的權重、BatchNorm 參數與 dropout 機率"""
    W_g: Tensor
    gamma: Tensor
    beta: Tensor
    state: BatchNormState
    dropout: float = 0.2

    def __post_init__(self):
        if self.W_g.shape[0] != self.W_g.shape[1]:
            raise ShapeError(f"W_g 必須為方陣，收到 {self.W_g.shape}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout 機率必須在 [0, 1)，收到 {self.dropout}")


def gcn_layer(h: Tensor, adjacency: Tensor, W_g: Tensor) -> Tensor:
    """
    對稱正規化圖卷積

    Ã = A + I，d_i = Σ_j Ã_ij，out_i = ReLU(W_g Σ_j Ã_ij / √(d_i d_j) h_j)

    Args:
        h: (..., n, d) 節點表示
        adjacency: (..., n, n) 軟鄰接（可只給 (n, n) 由批次廣播）
        W_g: (d, d)

    Returns:
        (..., n, d)
    """
    n = h.shape[-2]
    if adjacency.shape[-2:] != (n, n):
        raise ShapeError(f"鄰接矩陣 {adjacency.shape} 與節點數 {n} 不符")
    if h.shape[-1] != W_g.shape[1]:
        raise ShapeError(f"節點維度 {h.shape[-1]} 與 W_g {W_g.shape} 不符")
    if not np.all(np.isfinite(adjacency.data)):
        raise NonFiniteError("鄰接矩陣含非有限值")
    if np.any(adjacency.data < 0):
        raise ValueError("鄰接矩陣權重必須 ≥ 0")

    a_tilde = adjacency + np.eye(n)
    inv_sqrt = a_tilde.sum(axis=-1, keepdims=True) ** -0.5
    norm = a_tilde * inv_sqrt * inv_sqrt.swapaxes(-1, -2)
    aggregated = matmul(norm, h)
    return linear(aggregated, W_g).relu()


def gnn_block(
    h: Tensor,
    adjacency: Tensor,
    params: GnnBlockParams,
    training: bool,
    rng: Optional[np.random.Generator] = None
) -> Tensor:
    """GCN → BatchNorm（所有 batch/視窗/節點攤平成列）→ Dropout"""
    out = gcn_layer(h, adjacency, params.W_g)
    shape = out.shape
    flat = out.reshape(-1, shape[-1])
    flat = batchnorm(flat, params.gamma, params.beta, params.state, training)
    return dropout(flat.reshape(shape), params.dropout, training, rng)


def stacked_gnn(
    h0: Tensor,
    adjacency: Tensor,
    block1: GnnBlockParams,
    block2: GnnBlockParams,
    training: bool = False,
    rng: Optional[RngStreams] = None
) -> Tensor:
    """兩個 GNN 區塊串接，輸出拼接成 (..., n, 2d)"""
    rng1 = rng.get('dropout', 1) if (training and rng is not None) else None
    rng2 = rng.get('dropout', 2) if (training and rng is not None) else None
    out1 = gnn_block(h0, adjacency, block1, training, rng1)
    out2 = gnn_block(out1, adjacency, block2, training, rng2)
    return concat([out1, out2], axis=-1)


def temporal_gru(
    seq: Tensor,
    gru1: GruWeights,
    gru2: GruWeights,
    return_sequence: bool = False
) -> Tensor:
    """
    雙層 GRU 沿視窗軸傳遞（每個節點獨立）

    Args:
        seq: (B, S, n, 2d)
        gru1: 輸入 2d、隱藏 hidden_dim
        gru2: 輸入 hidden_dim、隱藏 d
        return_sequence: True 時回傳每一步的第二層輸出 (B, S, n, d)

    Returns:
        (B, n, d) 第 S 步之後的第二層狀態
    """
    if seq.ndim != 4:
        raise ShapeError(f"temporal_gru 需要 (B, S, n, F) 輸入，收到 {seq.shape}")
    batch, steps, n, _ = seq.shape
    if steps == 0:
        raise ShapeError("temporal_gru 至少需要一個視窗")

    h1 = Tensor(np.zeros((batch, n, gru1.hidden_size)))
    h2 = Tensor(np.zeros((batch, n, gru2.hidden_size)))
    outputs = []
    for t in range(steps):
        h1 = gru_cell(seq[:, t], h1, gru1)
        h2 = gru_cell(h1, h2, gru2)
        outputs.append(h2)

    if return_sequence:
        return stack(outputs, axis=1)
    return h2


class Grapher:
    """
    空間（GNN）+ 時間（GRU）編碼器

    ablation:
        no_gnn: 投影特徵與自身拼接成 2d 後直接進 GRU
        no_rnn: S 個視窗的 2d 表示取平均，再線性映射到 d
    """

    def __init__(
        self,
        block1: Optional[GnnBlockParams],
        block2: Optional[GnnBlockParams],
        gru1: Optional[GruWeights],
        gru2: Optional[GruWeights],
        no_rnn: Optional[Tuple[Tensor, Tensor]] = None,
        ablation: str = 'none'
    ):
        if ablation not in ABLATIONS:
            raise ValueError(f"未知的消融設定: {ablation}")
        if ablation != 'no_gnn' and (block1 is None or block2 is None):
            raise ValueError("Grapher 需要兩個 GNN 區塊")
        if ablation == 'no_rnn' and no_rnn is None:
            raise ValueError("no_rnn 消融需要 2d→d 線性層")
        if ablation != 'no_rnn' and (gru1 is None or gru2 is None):
            raise ValueError("Grapher 需要兩層 GRU")
        self.block1 = block1
        self.block2 = block2
        self.gru1 = gru1
        self.gru2 = gru2
        self.no_rnn = no_rnn
        self.ablation = ablation

    def spatial(
        self,
        xproj: Tensor,
        adjacency: Optional[Tensor],
        training: bool,
        rng: Optional[RngStreams] = None
    ) -> Tensor:
        """(B, S, n, d) → (B, S, n, 2d)"""
        if self.ablation == 'no_gnn':
            return concat([xproj, xproj], axis=-1)
        if adjacency is None:
            raise ValueError("GNN 區塊需要鄰接矩陣")
        return stacked_gnn(xproj, adjacency, self.block1, self.block2, training, rng)

    def temporal(self, encoded: Tensor, return_sequence: bool = False) -> Tensor:
        """(B, S, n, 2d) → (B, n, d)；return_sequence 時 (B, S, n, d)"""
        if self.ablation == 'no_rnn':
            weight, bias = self.no_rnn
            if return_sequence:
                return linear(encoded, weight, bias)
            return linear(encoded.mean(axis=1), weight, bias)
        return temporal_gru(encoded, self.gru1, self.gru2, return_sequence=return_sequence)

    def __call__(
        self,
        xproj: Tensor,
        adjacency: Optional[Tensor],
        training: bool = False,
        rng: Optional[RngStreams] = None,
        return_sequence: bool = False
    ) -> Tensor:
        encoded = self.spatial(xproj, adjacency, training, rng)
        return self.temporal(encoded, return_sequence=return_sequence)
