"""
VAE 合成電池資料
VAE-based Synthetic Battery Data

編碼器與解碼器都沿用 BGN 的骨幹：
    編碼器  x → DGI → Grapher → 以 b 加權讀出 → 線性 d → 2·d_z → (μ, σ)
    重參數化 z = μ + σ ⊙ ε
    解碼器  z → 線性 → 每個視窗的節點狀態 → DGI → Grapher → (h̃ ⊙ b) → 每個節點的視窗重建
另外用最後一個視窗的讀出重建正規化 RUL，讓生成樣本帶標籤可直接拿去擴增訓練集。

損失 = 重建 MSE + KL(N(μ, σ²) ‖ N(0, I)) + 鄰接 BCE + 標籤 MSE
"""

from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from backend.autodiff.functional import linear
from backend.autodiff.optim import Adam, clip_grad_norm
from backend.autodiff.rng import RngStreams, stream
from backend.autodiff.tensor import Tensor, no_grad
from backend.data_sources.battery_csv import COLUMNS, PARAMETERS
from backend.errors import NonFiniteError, ShapeError, TrainingError
from backend.etl.windowing import NormalizationStats, SampleSet
from backend.graph.dgi import off_diagonal_mask
from backend.models.bgn import BgnBackbone, ModelSpec, build_dgi, build_grapher, register_backbone
from backend.models.parameters import BgnParameters, ParamFactory
from backend.models.readout import VAR_FLOOR, graph_readout
from backend.training.config import TrainConfig
from config.logging_setup import setup_logger

logger = setup_logger(__name__)

BCE_EPS = 1e-7
SYNTHETIC_PREFIX = 'synthetic-'


@dataclass
class LatentSample:
    """z = mu + sigma ⊙ epsilon"""
    mu: Tensor
    sigma: Tensor
    z: Tensor
    epsilon: np.ndarray


@dataclass
class Reconstruction:
    features: Tensor        # (B, S, n, W)
    targets: Tensor         # (B,)
    adjacency: Tensor       # (B, S, n, n)


@dataclass
class VaeLoss:
    value: Tensor
    reconstruction: float
    kl: float
    adjacency: float
    label: float

    def item(self) -> float:
        return self.value.item()

    def terms(self) -> Dict[str, float]:
        return {
            'loss': self.item(),
            'reconstruction': self.reconstruction,
            'kl': self.kl,
            'adjacency': self.adjacency,
            'label': self.label,
        }


@dataclass
class GeneratedBatch:
    """生成的樣本（正規化空間）"""
    features: np.ndarray    # (N, S, n, W)
    targets: np.ndarray     # (N,)

    def __len__(self) -> int:
        return int(self.targets.shape[0])

    def to_sample_set(self, window: int, stride: int) -> SampleSet:
        seq_len = self.features.shape[1]
        end_index = (seq_len - 1) * stride + window - 1
        return SampleSet(
            features=self.features,
            targets=self.targets,
            battery_ids=np.asarray([f'{SYNTHETIC_PREFIX}{i:04d}' for i in range(len(self))], dtype=object),
            end_indices=np.full(len(self), end_index, dtype=np.int64),
        )


# ========== 參數 ==========

def vae_model_spec(config: TrainConfig, n_nodes: int = len(PARAMETERS)) -> ModelSpec:
    """VAE 一律使用完整的 DGI + Grapher（不套消融、不用 single_step）"""
    return replace(config.model_spec(n_nodes), variant='bgn', ablation='none', temporal_mode='window_sequence')


def build_vae_parameters(spec: ModelSpec, latent_dim: int, seq_len: int, seed: int) -> BgnParameters:
    params = BgnParameters()
    factory = ParamFactory(params, stream(seed, 'vae_init'))
    n, d = spec.n_nodes, spec.embedding_dim

    enc = factory.scoped('enc.')
    register_backbone(enc, spec)
    enc.linear('latent', 2 * latent_dim, d)

    dec = factory.scoped('dec.')
    register_backbone(dec, spec, projection=False)
    dec.linear('state', seq_len * n * d, latent_dim)
    dec.linear('out', spec.window, d)
    dec.linear('label', 1, d)
    return params


# ========== 模型 ==========

def kl_divergence(mu: Tensor, sigma: Tensor) -> Tensor:
    """0.5 · Σ(μ² + σ² − log σ² − 1)，先對潛在維度加總再對批次取平均"""
    if np.any(sigma.data <= 0):
        raise ValueError("kl_divergence: sigma 必須為正")
    per_dim = mu * mu + sigma * sigma - sigma.log() * 2.0 - 1.0
    return (per_dim.sum(axis=-1) * 0.5).mean()


def adjacency_bce(target: Union[Tensor, np.ndarray], predicted: Tensor) -> Tensor:
    """非對角邊上的二元交叉熵平均；target 不回傳梯度"""
    n = predicted.shape[-1]
    target = target.data if isinstance(target, Tensor) else np.asarray(target, dtype=np.float64)
    target = np.broadcast_to(target, predicted.shape)
    mask = np.broadcast_to(off_diagonal_mask(n), predicted.shape)
    p = predicted.clamp(BCE_EPS, 1.0 - BCE_EPS)
    per_edge = -(p.log() * target + (1.0 - p).log() * (1.0 - target))
    return (per_edge * mask).sum() * (1.0 / float(mask.sum()))


class BatteryVae:
    """BGN 結構的編碼器 / 解碼器"""

    def __init__(self, params: BgnParameters, spec: ModelSpec, latent_dim: int, seq_len: int):
        self.params = params
        self.spec = spec
        self.latent_dim = latent_dim
        self.seq_len = seq_len

        self.encoder = BgnBackbone(params, spec, prefix='enc.')
        self.latent = (params['enc.latent.weight'], params['enc.latent.bias'])

        self.dec_emb = params['dec.node_emb']
        self.dec_dgi = build_dgi(params, spec, 'dec.')
        self.dec_grapher = build_grapher(params, spec, 'dec.')
        self.dec_state = (params['dec.state.weight'], params['dec.state.bias'])
        self.dec_out = (params['dec.out.weight'], params['dec.out.bias'])
        self.dec_label = (params['dec.label.weight'], params['dec.label.bias'])

    @classmethod
    def create(cls, config: TrainConfig, seed: Optional[int] = None) -> 'BatteryVae':
        spec = vae_model_spec(config)
        seed = config.seed if seed is None else seed
        params = build_vae_parameters(spec, config.latent_dim, config.seq_len, seed)
        return cls(params, spec, config.latent_dim, config.seq_len)

    def encode(
        self,
        features,
        training: bool = False,
        rng: Optional[RngStreams] = None,
        epsilon: Optional[np.ndarray] = None
    ) -> Tuple[LatentSample, Optional[Tensor]]:
        """
        Args:
            features: (B, S, n, W)
            epsilon: 指定重參數化雜訊；None 時訓練模式抽 N(0, I)，評估模式為 0

        Returns:
            (LatentSample, 編碼器的鄰接矩陣)
        """
        encoding = self.encoder.encode(features, training, rng.child('enc') if rng is not None else None)
        h_g = graph_readout(encoding.node_states, self.encoder.node_emb)
        stats = linear(h_g, *self.latent)
        dz = self.latent_dim
        mu = stats[:, :dz]
        sigma = stats[:, dz:].softplus() + VAR_FLOOR

        if epsilon is None:
            if training:
                if rng is None:
                    raise ValueError("訓練模式需要 rng")
                epsilon = rng.get('epsilon').standard_normal(mu.shape)
            else:
                epsilon = np.zeros(mu.shape)
        epsilon = np.asarray(epsilon, dtype=np.float64)
        if epsilon.shape != mu.shape:
            raise ShapeError(f"epsilon 形狀 {epsilon.shape} 應為 {mu.shape}")
        z = mu + sigma * epsilon
        return LatentSample(mu, sigma, z, epsilon), encoding.adjacency

    def decode(self, z, training: bool = False, rng: Optional[RngStreams] = None) -> Reconstruction:
        z = z if isinstance(z, Tensor) else Tensor(z)
        if z.ndim != 2 or z.shape[1] != self.latent_dim:
            raise ShapeError(f"z 應為 (B, {self.latent_dim})，收到 {z.shape}")
        if training and rng is None:
            raise ValueError("訓練模式需要 rng")
        n, d = self.spec.n_nodes, self.spec.embedding_dim
        batch = z.shape[0]

        states = linear(z, *self.dec_state).reshape(batch, self.seq_len, n, d)
        gumbel = rng.get('dec_gumbel') if training else None
        adjacency = self.dec_dgi.adjacency(self.dec_emb, states, training, gumbel)
        h_seq = self.dec_grapher(
            states, adjacency, training, rng.child('dec') if rng is not None else None, return_sequence=True
        )
        features = linear(h_seq * self.dec_emb, *self.dec_out).sigmoid()
        label = linear(graph_readout(h_seq[:, -1], self.dec_emb), *self.dec_label).sigmoid()
        return Reconstruction(features, label.reshape(batch), adjacency)

    def forward(self, features, training: bool = False, rng: Optional[RngStreams] = None):
        latent, adjacency = self.encode(features, training, rng)
        return latent, adjacency, self.decode(latent.z, training, rng)


def vae_elbo(
    x,
    recon: Tensor,
    mu: Tensor,
    sigma: Tensor,
    A,
    A_recon: Tensor,
    y=None,
    y_recon: Optional[Tensor] = None
) -> VaeLoss:
    """
    負的變分下界

    Raises:
        ValueError: sigma 含非正值
        ShapeError: 重建與輸入形狀不符
    """
    x = Tensor._lift(x)
    if recon.shape != x.shape:
        raise ShapeError(f"vae_elbo: 重建 {recon.shape} 與輸入 {x.shape} 不符")
    diff = recon - x
    reconstruction = (diff * diff).mean()
    kl = kl_divergence(mu, sigma)
    bce = adjacency_bce(A, A_recon)
    total = reconstruction + kl + bce

    label = 0.0
    if y is not None and y_recon is not None:
        label_diff = y_recon - Tensor._lift(y)
        label_term = (label_diff * label_diff).mean()
        total = total + label_term
        label = label_term.item()
    return VaeLoss(total, reconstruction.item(), kl.item(), bce.item(), label)


# ========== 訓練與生成 ==========

def train_vae(
    samples: SampleSet,
    config: TrainConfig,
    seed: Optional[int] = None
) -> Tuple[BatteryVae, List[Dict[str, float]]]:
    """
    在訓練樣本上訓練 VAE（gen_epochs 個 epoch）

    Returns:
        (vae, 每個 epoch 的平均損失項)

    Raises:
        TrainingError: 損失或梯度出現非有限值
    """
    seed = config.seed if seed is None else seed
    vae = BatteryVae.create(config, seed)
    optimizer = Adam(vae.params.tensors, lr=config.lr)
    streams = RngStreams(seed, 'vae')
    n = len(samples)
    logger.info(f"🧬 開始訓練 VAE：{vae.params.count()} 個參數，{n} 個樣本，d_z={config.latent_dim}")

    history: List[Dict[str, float]] = []
    for epoch in range(1, config.gen_epochs + 1):
        order = streams.get('shuffle', epoch).permutation(n)
        epoch_terms: List[Dict[str, float]] = []
        for batch_index, start in enumerate(range(0, n, config.batch_size)):
            index = order[start:start + config.batch_size]
            x = samples.features[index]
            try:
                optimizer.zero_grad()
                latent, adjacency, recon = vae.forward(x, training=True, rng=streams.child(epoch, batch_index))
                loss = vae_elbo(x, recon.features, latent.mu, latent.sigma, adjacency, recon.adjacency,
                                samples.targets[index], recon.targets)
                loss.value.backward()
                clip_grad_norm(vae.params.tensors, config.grad_clip)
                optimizer.step()
            except NonFiniteError as exc:
                raise TrainingError(f"VAE 在 epoch {epoch} batch {batch_index} 發散: {exc}") from exc
            epoch_terms.append(loss.terms())

        summary = {'epoch': epoch, **pd.DataFrame(epoch_terms).mean().to_dict()}
        history.append(summary)
        logger.debug(f"VAE epoch {epoch:3d} | loss={summary['loss']:.6f} | kl={summary['kl']:.6f}")

    logger.info(f"✅ VAE 訓練完成，最後損失 {history[-1]['loss']:.6f}")
    return vae, history


def vae_generate(vae: BatteryVae, n_samples: int, seed: int, batch_size: int = 256) -> GeneratedBatch:
    """z ~ N(0, I) 經解碼器生成視窗序列（同一 seed 結果相同）"""
    if n_samples < 1:
        raise ValueError(f"n_samples 必須 ≥ 1，收到 {n_samples}")
    z = stream(seed, 'vae_generate').standard_normal((n_samples, vae.latent_dim))
    features, targets = [], []
    with no_grad():
        for start in range(0, n_samples, batch_size):
            out = vae.decode(z[start:start + batch_size], training=False)
            features.append(out.features.data)
            targets.append(out.targets.data)
    return GeneratedBatch(np.concatenate(features), np.concatenate(targets))


def generated_frame(batch: GeneratedBatch, stats: NormalizationStats) -> pd.DataFrame:
    """
    生成樣本轉回 CSV 格式

    每個樣本當作一顆合成電池（battery_id 以 'synthetic-' 開頭），第 t 個視窗為 cycle t+1，
    視窗內第 w 步為 step w，rul 為該樣本的生成標籤（整顆電池相同）。
    """
    n_samples, seq_len, n, window = batch.features.shape
    # (N, S, W, n) → 每列一步
    values = stats.denormalize(batch.features.transpose(0, 1, 3, 2).reshape(-1, n))
    frame = pd.DataFrame(values, columns=PARAMETERS)
    frame.insert(0, 'battery_id', np.repeat([f'{SYNTHETIC_PREFIX}{i:04d}' for i in range(n_samples)], seq_len * window))
    frame.insert(1, 'cycle', np.tile(np.repeat(np.arange(1, seq_len + 1), window), n_samples))
    frame.insert(2, 'step', np.tile(np.arange(window), n_samples * seq_len))
    frame['rul'] = np.repeat(batch.targets * stats.rul_max, seq_len * window)
    return frame[COLUMNS]
