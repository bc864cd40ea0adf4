"""
BGN / BGN-UE 模型組裝
BGN Model Assembly

DGI → Grapher → 以節點嵌入加權的讀出 → 點估計頭（BGN）或高斯頭（BGN-UE）。

參數命名：
    node_emb                 (n, d)
    W_s                      (d, W)
    dgi.fc1.weight / .bias   (hidden, 2d)
    dgi.fc2.weight / .bias   (2, hidden)
    grapher.gnn{1,2}.W_g     (d, d)，grapher.gnn{1,2}.bn.gamma / .beta
    grapher.gru1.*           W (hidden, 2d)，U (hidden, hidden)
    grapher.gru2.*           W (d, hidden)，U (d, d)
    grapher.no_rnn.*         (d, 2d)，只在 no_rnn 消融時存在
    head.weight / head.bias  (1, d)；BGN-UE 為 head.fc1 / head.fc2
"""

from dataclasses import asdict, dataclass
from typing import Any, Dict, Mapping, Optional, Tuple

import numpy as np

from backend.autodiff.functional import GruWeights
from backend.autodiff.rng import RngStreams, stream
from backend.autodiff.tensor import Tensor, no_grad
from backend.graph.dgi import DynamicGraphInference, EdgeMlp, fully_connected_adjacency, project_features
from backend.models.grapher import ABLATIONS, GnnBlockParams, Grapher
from backend.models.parameters import BgnParameters, ParamFactory
from backend.models.readout import HeadMlp, gaussian_head, graph_readout, point_head
from backend.errors import ConfigError, ShapeError

VARIANTS = ('bgn', 'bgn_ue')
TEMPORAL_MODES = ('window_sequence', 'single_step')

# ablation → DGI 邏輯變體；fcg / no_gnn 不需要 DGI
_DGI_VARIANT = {
    'none': 'full',
    'no_embeddings': 'no_embeddings',
    'no_features': 'no_features',
    'no_rnn': 'full',
}

# 梯度流檢查用的參數群組（標籤 → 名稱前綴）
GRADIENT_GROUPS = {
    'node_emb': 'node_emb',
    'W_s': 'W_s',
    'g_fc': 'dgi.',
    'W_g': 'grapher.gnn',
    'gru': 'grapher.gru',
    'head': 'head.',
}

_GRU_GATES = ('z', 'r', 'h')


@dataclass(frozen=True)
class ModelSpec:
    """決定參數形狀與前向路徑的模型設定"""
    n_nodes: int = 6
    window: int = 64
    embedding_dim: int = 32
    hidden_dim: int = 32
    variant: str = 'bgn'
    ablation: str = 'none'
    gamma: float = 0.05
    dropout: float = 0.2
    temporal_mode: str = 'window_sequence'

    def __post_init__(self):
        if self.n_nodes < 2:
            raise ConfigError(f"n_nodes 必須 ≥ 2，收到 {self.n_nodes}")
        for name in ('window', 'embedding_dim', 'hidden_dim'):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} 必須為正整數，收到 {getattr(self, name)}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"未知的模型變體: {self.variant}")
        if self.ablation not in ABLATIONS:
            raise ConfigError(f"未知的消融設定: {self.ablation}")
        if self.temporal_mode not in TEMPORAL_MODES:
            raise ConfigError(f"未知的 temporal_mode: {self.temporal_mode}")
        if self.gamma <= 0:
            raise ConfigError(f"gamma 必須為正，收到 {self.gamma}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout 必須在 [0, 1)，收到 {self.dropout}")

    @property
    def dgi_variant(self) -> Optional[str]:
        return _DGI_VARIANT.get(self.ablation)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> 'ModelSpec':
        return cls(**{k: data[k] for k in cls.__dataclass_fields__ if k in data})


@dataclass
class Encoding:
    node_states: Tensor
    adjacency: Optional[Tensor]


@dataclass
class ModelOutput:
    """pred 為正規化 RUL（BGN-UE 時即 mu），var 只有 BGN-UE 有"""
    pred: Tensor
    var: Optional[Tensor]
    adjacency: Optional[Tensor]


# ========== 參數初始化 ==========

def _register_gru(factory: ParamFactory, hidden: int, inputs: int) -> None:
    for gate in _GRU_GATES:
        factory.weight(f'W_{gate}', hidden, inputs)
        factory.weight(f'U_{gate}', hidden, hidden)
        factory.bias(f'b_{gate}', hidden)


def register_backbone(factory: ParamFactory, spec: ModelSpec, projection: bool = True) -> None:
    """登記 DGI + Grapher 的參數（不含預測頭）；projection=False 時不建立 W_s"""
    n, d, hidden = spec.n_nodes, spec.embedding_dim, spec.hidden_dim

    factory.embedding('node_emb', n, d)
    if projection:
        factory.weight('W_s', d, spec.window)

    if spec.dgi_variant is not None:
        dgi = factory.scoped('dgi.')
        dgi.linear('fc1', hidden, 2 * d)
        dgi.linear('fc2', 2, hidden)

    grapher = factory.scoped('grapher.')
    if spec.ablation != 'no_gnn':
        for k in (1, 2):
            grapher.weight(f'gnn{k}.W_g', d, d)
            grapher.batchnorm(f'gnn{k}.bn', d)
    if spec.ablation == 'no_rnn':
        grapher.linear('no_rnn', d, 2 * d)
    else:
        _register_gru(grapher.scoped('gru1.'), hidden, 2 * d)
        _register_gru(grapher.scoped('gru2.'), d, hidden)


def register_head(factory: ParamFactory, spec: ModelSpec) -> None:
    d, hidden = spec.embedding_dim, spec.hidden_dim
    head = factory.scoped('head.')
    if spec.variant == 'bgn':
        factory.linear('head', 1, d)
    else:
        head.linear('fc1', hidden, d)
        head.linear('fc2', 2, hidden)


def build_parameters(spec: ModelSpec, seed: int) -> BgnParameters:
    """
    依 spec 建立並初始化全部參數

    權重 ~ Uniform(±√(1/fan_in))，偏差 0，節點嵌入 ~ Normal(0, 1/√d)，BatchNorm gamma=1 beta=0。
    同一個 seed 產生逐位元相同的參數。
    """
    params = BgnParameters()
    factory = ParamFactory(params, stream(seed, 'init'))
    register_backbone(factory, spec)
    register_head(factory, spec)
    return params


# ========== 前向 ==========

def _gru_view(params: BgnParameters, prefix: str) -> GruWeights:
    return GruWeights(**{
        f'{kind}_{gate}': params[f'{prefix}{kind}_{gate}']
        for gate in _GRU_GATES for kind in ('W', 'U', 'b')
    })


def build_dgi(params: BgnParameters, spec: ModelSpec, prefix: str = '') -> Optional[DynamicGraphInference]:
    if spec.dgi_variant is None:
        return None
    p = lambda name: params[f'{prefix}dgi.{name}']
    mlp = EdgeMlp(p('fc1.weight'), p('fc1.bias'), p('fc2.weight'), p('fc2.bias'))
    return DynamicGraphInference(mlp, spec.n_nodes, spec.gamma, spec.dgi_variant)


def build_grapher(params: BgnParameters, spec: ModelSpec, prefix: str = '') -> Grapher:
    p = lambda name: params[f'{prefix}grapher.{name}']
    blocks = [None, None]
    if spec.ablation != 'no_gnn':
        blocks = [
            GnnBlockParams(
                W_g=p(f'gnn{k}.W_g'),
                gamma=p(f'gnn{k}.bn.gamma'),
                beta=p(f'gnn{k}.bn.beta'),
                state=params.bn_states[f'{prefix}grapher.gnn{k}.bn'],
                dropout=spec.dropout,
            )
            for k in (1, 2)
        ]
    if spec.ablation == 'no_rnn':
        return Grapher(blocks[0], blocks[1], None, None, (p('no_rnn.weight'), p('no_rnn.bias')), spec.ablation)
    gru1 = _gru_view(params, f'{prefix}grapher.gru1.')
    gru2 = _gru_view(params, f'{prefix}grapher.gru2.')
    return Grapher(blocks[0], blocks[1], gru1, gru2, None, spec.ablation)


class BgnBackbone:
    """DGI + Grapher，可用名稱前綴共用（VAE 編碼器用 'enc.'）"""

    def __init__(self, params: BgnParameters, spec: ModelSpec, prefix: str = ''):
        self.params = params
        self.spec = spec
        self.prefix = prefix
        self.node_emb = params[f'{prefix}node_emb']
        self.W_s = params[f'{prefix}W_s']
        self.dgi = build_dgi(params, spec, prefix)
        self.grapher = build_grapher(params, spec, prefix)
        self._fcg = fully_connected_adjacency(spec.n_nodes) if spec.ablation == 'fcg' else None

    def infer_graph(self, xproj: Tensor, training: bool, rng: Optional[RngStreams]) -> Optional[Tensor]:
        """回傳每個視窗的鄰接矩陣；fcg 回傳全連接圖，no_gnn 不需要圖"""
        if self.spec.ablation == 'fcg':
            return self._fcg
        if self.dgi is None:
            return None
        gumbel_rng = rng.get('gumbel') if training else None
        return self.dgi.adjacency(self.node_emb, xproj, training, gumbel_rng)

    def encode(
        self,
        features,
        training: bool = False,
        rng: Optional[RngStreams] = None,
        return_sequence: bool = False
    ) -> Encoding:
        """
        Args:
            features: (B, S, n, W) 正規化後的視窗序列
            training: 訓練模式（Gumbel 雜訊、dropout、BatchNorm 批次統計）
            rng: 訓練模式必填
            return_sequence: 回傳每個視窗的節點狀態 (B, S, n, d)

        Returns:
            Encoding：節點狀態 (B, n, d) 與鄰接矩陣
        """
        x = features if isinstance(features, Tensor) else Tensor(features)
        if x.ndim != 4 or x.shape[2] != self.spec.n_nodes or x.shape[3] != self.spec.window:
            raise ShapeError(
                f"輸入應為 (B, S, {self.spec.n_nodes}, {self.spec.window})，收到 {x.shape}"
            )
        if training and rng is None:
            raise ValueError("訓練模式需要 rng")
        if self.spec.temporal_mode == 'single_step':
            x = x[:, -1:]

        xproj = project_features(x, self.W_s)
        adjacency = self.infer_graph(xproj, training, rng)
        states = self.grapher(xproj, adjacency, training, rng, return_sequence=return_sequence)
        return Encoding(states, adjacency)


class BgnModel:
    """BGN（點估計）與 BGN-UE（高斯）"""

    def __init__(self, params: BgnParameters, spec: ModelSpec):
        self.params = params
        self.spec = spec
        self.backbone = BgnBackbone(params, spec)
        if spec.variant == 'bgn':
            self.head = (params['head.weight'], params['head.bias'])
        else:
            self.head = HeadMlp(
                params['head.fc1.weight'], params['head.fc1.bias'],
                params['head.fc2.weight'], params['head.fc2.bias'],
            )

    @property
    def dgi(self) -> Optional[DynamicGraphInference]:
        return self.backbone.dgi

    def forward(self, features, training: bool = False, rng: Optional[RngStreams] = None) -> ModelOutput:
        encoding = self.backbone.encode(features, training, rng)
        h_g = graph_readout(encoding.node_states, self.backbone.node_emb)
        if self.spec.variant == 'bgn':
            return ModelOutput(point_head(h_g, *self.head), None, encoding.adjacency)
        mu, var = gaussian_head(h_g, self.head)
        return ModelOutput(mu, var, encoding.adjacency)

    __call__ = forward

    def predict(self, features: np.ndarray, batch_size: int = 256) -> Tuple[np.ndarray, Optional[np.ndarray]]:
        """評估模式批次預測，回傳 (pred, var) 的 numpy 陣列（正規化單位）"""
        preds, variances = [], []
        with no_grad():
            for start in range(0, len(features), batch_size):
                out = self.forward(features[start:start + batch_size], training=False)
                preds.append(out.pred.data)
                if out.var is not None:
                    variances.append(out.var.data)
        if not preds:
            return np.zeros(0), (np.zeros(0) if self.spec.variant == 'bgn_ue' else None)
        pred = np.concatenate(preds)
        var = np.concatenate(variances) if variances else None
        return pred, var
