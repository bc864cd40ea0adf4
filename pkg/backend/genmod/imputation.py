"""
缺值補值（對抗式訓練）
Adversarial Missing-value Imputation

生成器：BGN 的 DGI + 兩個 GNN 區塊，輸入為單一視窗的 [x̃, m]（x̃ = m⊙x + (1−m)⊙z，z ~ U(0, 0.01)），
        輸出每個節點的完整視窗；補值結果 x̂ = m⊙x + (1−m)⊙G(x̃, m)
判別器：逐節點 MLP + sigmoid，輸入 [x̂, h]（h = m⊙Bernoulli(hint_rate)），輸出每個元素是觀測值的機率

目標函數是遮罩判別的交叉熵；E[D(x_obs)] − E[D(x_imp)] 只當作 Wasserstein 診斷值記錄，不做權重裁剪。
"""

from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from backend.autodiff.functional import concat, linear
from backend.autodiff.optim import Adam, clip_grad_norm
from backend.autodiff.rng import RngStreams, stream
from backend.autodiff.tensor import Tensor, no_grad
from backend.data_sources.battery_csv import KEY_COLUMNS, PARAMETERS
from backend.errors import DataError, NonFiniteError, ShapeError, TrainingError
from backend.etl.windowing import NormalizationStats
from backend.graph.dgi import DynamicGraphInference, EdgeMlp, project_features
from backend.models.grapher import GnnBlockParams, stacked_gnn
from backend.models.parameters import BgnParameters, ParamFactory
from backend.training.config import TrainConfig
from config.logging_setup import setup_logger

logger = setup_logger(__name__)

LOG_EPS = 1e-8
NOISE_HIGH = 0.01


@dataclass
class MaskedBatch:
    """x 為正規化視窗 (B, n, W)，m 為 1=觀測 的遮罩，z_noise 為缺值處的填充雜訊"""
    x: np.ndarray
    m: np.ndarray
    z_noise: np.ndarray

    def __post_init__(self):
        check_mask(self.x, self.m)
        if self.z_noise.shape != self.x.shape:
            raise ShapeError(f"z_noise {self.z_noise.shape} 與 x {self.x.shape} 不符")

    @classmethod
    def sample(cls, x: np.ndarray, m: np.ndarray, rng: np.random.Generator) -> 'MaskedBatch':
        x = np.nan_to_num(np.asarray(x, dtype=np.float64))
        return cls(x, np.asarray(m, dtype=np.float64), rng.uniform(0.0, NOISE_HIGH, size=x.shape))

    @property
    def generator_input(self) -> np.ndarray:
        return self.m * self.x + (1.0 - self.m) * self.z_noise


def check_mask(x: np.ndarray, m: np.ndarray) -> None:
    if np.shape(x) != np.shape(m):
        raise ShapeError(f"遮罩形狀 {np.shape(m)} 與資料 {np.shape(x)} 不符")
    if not np.isin(m, (0.0, 1.0)).all():
        raise ValueError("遮罩必須只含 0 與 1")


# ========== 網路 ==========

def build_imputer_parameters(config: TrainConfig, n_nodes: int = len(PARAMETERS), seed: Optional[int] = None) -> BgnParameters:
    n, d, hidden, window = n_nodes, config.embedding_dim, config.hidden_dim, config.window
    params = BgnParameters()
    factory = ParamFactory(params, stream(config.seed if seed is None else seed, 'imputer_init'))

    gen = factory.scoped('gen.')
    gen.embedding('node_emb', n, d)
    gen.weight('W_s', d, 2 * window)
    gen.linear('dgi.fc1', hidden, 2 * d)
    gen.linear('dgi.fc2', 2, hidden)
    for k in (1, 2):
        gen.weight(f'gnn{k}.W_g', d, d)
        gen.batchnorm(f'gnn{k}.bn', d)
    gen.linear('out.proj', d, 2 * d)
    gen.linear('out.recon', window, d)

    disc = factory.scoped('disc.')
    disc.linear('fc1', hidden, 2 * window)
    disc.linear('fc2', window, hidden)
    return params


class GraphImputer:
    """生成器與判別器共用一組具名參數（'gen.' / 'disc.'）"""

    def __init__(self, params: BgnParameters, n_nodes: int, window: int, gamma: float = 0.05, dropout: float = 0.2):
        self.params = params
        self.n_nodes = n_nodes
        self.window = window
        p = params.tensors
        self.node_emb = p['gen.node_emb']
        self.W_s = p['gen.W_s']
        self.dgi = DynamicGraphInference(
            EdgeMlp(p['gen.dgi.fc1.weight'], p['gen.dgi.fc1.bias'], p['gen.dgi.fc2.weight'], p['gen.dgi.fc2.bias']),
            n_nodes, gamma, 'full',
        )
        self.blocks = [
            GnnBlockParams(p[f'gen.gnn{k}.W_g'], p[f'gen.gnn{k}.bn.gamma'], p[f'gen.gnn{k}.bn.beta'],
                           params.bn_states[f'gen.gnn{k}.bn'], dropout)
            for k in (1, 2)
        ]

    @classmethod
    def create(cls, config: TrainConfig, n_nodes: int = len(PARAMETERS), seed: Optional[int] = None) -> 'GraphImputer':
        params = build_imputer_parameters(config, n_nodes, seed)
        return cls(params, n_nodes, config.window, config.gamma, config.dropout)

    def generator_params(self) -> Dict[str, Tensor]:
        return self.params.group('gen.')

    def discriminator_params(self) -> Dict[str, Tensor]:
        return self.params.group('disc.')

    def generate(self, x_tilde, m, training: bool = False, rng: Optional[RngStreams] = None) -> Tensor:
        """(B, n, W) → (B, n, W)，值域 (0, 1)"""
        x_tilde, m = np.asarray(x_tilde, dtype=np.float64), np.asarray(m, dtype=np.float64)
        if x_tilde.ndim != 3 or x_tilde.shape[1:] != (self.n_nodes, self.window):
            raise ShapeError(f"生成器輸入應為 (B, {self.n_nodes}, {self.window})，收到 {x_tilde.shape}")
        if training and rng is None:
            raise ValueError("訓練模式需要 rng")
        p = self.params.tensors

        xproj = project_features(Tensor(np.concatenate([x_tilde, m], axis=-1)), self.W_s)
        adjacency = self.dgi.adjacency(self.node_emb, xproj, training, rng.get('gumbel') if training else None)
        h = stacked_gnn(xproj, adjacency, self.blocks[0], self.blocks[1], training, rng)
        h = linear(h, p['gen.out.proj.weight'], p['gen.out.proj.bias']) * self.node_emb
        return linear(h, p['gen.out.recon.weight'], p['gen.out.recon.bias']).sigmoid()

    def discriminate(self, x_hat, hint) -> Tensor:
        """每個元素是觀測值的機率，(B, n, W)"""
        p = self.params.tensors
        x_hat = Tensor._lift(x_hat)
        hidden = linear(concat([x_hat, Tensor._lift(hint)], axis=-1), p['disc.fc1.weight'], p['disc.fc1.bias']).relu()
        return linear(hidden, p['disc.fc2.weight'], p['disc.fc2.bias']).sigmoid()


# ========== 損失 ==========

def discriminator_loss(d_prob: Tensor, m: np.ndarray) -> Tensor:
    """−mean(m·log D + (1−m)·log(1−D))"""
    return -((d_prob + LOG_EPS).log() * m + (1.0 - d_prob + LOG_EPS).log() * (1.0 - m)).mean()


def generator_loss(d_prob: Tensor, generated: Tensor, batch: MaskedBatch, rec_weight: float) -> Tuple[Tensor, Tensor]:
    """
    Returns:
        (總損失, 觀測位置的重建 MSE)
    """
    adversarial = -((d_prob + LOG_EPS).log() * (1.0 - batch.m)).mean()
    observed = float(batch.m.mean())
    diff = (generated - batch.x) * batch.m
    reconstruction = (diff * diff).mean() * (1.0 / observed) if observed > 0 else Tensor(0.0)
    return adversarial + reconstruction * rec_weight, reconstruction


def wasserstein_estimate(d_prob: np.ndarray, m: np.ndarray) -> float:
    """E[D(x_obs)] − E[D(x_imp)]"""
    observed, missing = m.sum(), (1.0 - m).sum()
    if observed == 0 or missing == 0:
        return 0.0
    return float((d_prob * m).sum() / observed - (d_prob * (1.0 - m)).sum() / missing)


def sample_hint(m: np.ndarray, hint_rate: float, rng: np.random.Generator) -> np.ndarray:
    return m * (rng.uniform(size=m.shape) < hint_rate)


def wgan_train_step(
    batch: MaskedBatch,
    imputer: GraphImputer,
    g_opt: Adam,
    d_opt: Adam,
    rng: RngStreams,
    rec_weight: float = 10.0,
    hint_rate: float = 0.9,
    grad_clip: float = 0.0
) -> Dict[str, float]:
    """
    先更新判別器、再更新生成器

    Returns:
        {'d_loss', 'g_loss', 'reconstruction', 'wasserstein'}

    Raises:
        TrainingError: 出現非有限值
    """
    hint = sample_hint(batch.m, hint_rate, rng.get('hint'))
    x_tilde = batch.generator_input
    try:
        # 判別器
        d_opt.zero_grad()
        g_opt.zero_grad()
        with no_grad():
            generated = imputer.generate(x_tilde, batch.m, training=True, rng=rng.child('d_step')).data
        x_hat = batch.m * batch.x + (1.0 - batch.m) * generated
        d_prob = imputer.discriminate(x_hat, hint)
        d_loss = discriminator_loss(d_prob, batch.m)
        d_loss.backward()
        clip_grad_norm(imputer.discriminator_params(), grad_clip)
        d_opt.step()

        # 生成器
        d_opt.zero_grad()
        g_opt.zero_grad()
        generated = imputer.generate(x_tilde, batch.m, training=True, rng=rng.child('g_step'))
        x_hat = generated * (1.0 - batch.m) + batch.m * batch.x
        d_prob_g = imputer.discriminate(x_hat, hint)
        g_loss, reconstruction = generator_loss(d_prob_g, generated, batch, rec_weight)
        g_loss.backward()
        clip_grad_norm(imputer.generator_params(), grad_clip)
        g_opt.step()
        d_opt.zero_grad()
    except NonFiniteError as exc:
        raise TrainingError(f"補值模型發散: {exc}") from exc

    return {
        'd_loss': d_loss.item(),
        'g_loss': g_loss.item(),
        'reconstruction': reconstruction.item(),
        'wasserstein': wasserstein_estimate(d_prob.data, batch.m),
    }


def wgan_impute(x: np.ndarray, m: np.ndarray, imputer: GraphImputer, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """
    觀測值原樣保留，缺值處用生成器輸出

    Raises:
        ValueError: 遮罩不是 0/1
        ShapeError: 形狀不符
    """
    x = np.asarray(x, dtype=np.float64)
    m = np.asarray(m, dtype=np.float64)
    check_mask(x, m)
    rng = rng if rng is not None else stream(0, 'impute')
    batch = MaskedBatch.sample(x, m, rng)
    with no_grad():
        generated = imputer.generate(batch.generator_input, m, training=False).data
    return np.where(m == 1.0, x, generated)


def mean_impute(x: np.ndarray, m: np.ndarray, means: Optional[np.ndarray] = None) -> np.ndarray:
    """基準：缺值用每個參數的觀測平均填入"""
    x = np.asarray(x, dtype=np.float64)
    m = np.asarray(m, dtype=np.float64)
    check_mask(x, m)
    if means is None:
        means = feature_means(x, m)
    return np.where(m == 1.0, x, means[None, :, None])


def feature_means(x: np.ndarray, m: np.ndarray) -> np.ndarray:
    """(B, n, W) → (n,)"""
    observed = m.sum(axis=(0, 2))
    totals = (np.nan_to_num(x) * m).sum(axis=(0, 2))
    return np.divide(totals, observed, out=np.zeros_like(totals), where=observed > 0)


def masked_rmse(truth: np.ndarray, imputed: np.ndarray, m: np.ndarray) -> float:
    """只在缺值位置計算的 RMSE"""
    missing = np.asarray(m) == 0
    if not missing.any():
        return 0.0
    return float(np.sqrt(np.mean((np.asarray(truth)[missing] - np.asarray(imputed)[missing]) ** 2)))


# ========== 視窗 / DataFrame ==========

def mask_frame(frame: pd.DataFrame, rate: float, seed: int) -> pd.DataFrame:
    """每個參數欄逐元素以機率 rate 設為缺值（模擬資料遺失）"""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"mask rate 必須在 [0, 1)，收到 {rate}")
    masked = frame.copy()
    drop = stream(seed, 'mask').uniform(size=(len(frame), len(PARAMETERS))) < rate
    values = masked[PARAMETERS].to_numpy(dtype=np.float64)
    masked[PARAMETERS] = np.where(drop, np.nan, values)
    logger.info(f"🕳️  遮蔽 {int(drop.sum())} / {drop.size} 個量測值（rate={rate}）")
    return masked


def frame_windows(frame: pd.DataFrame, stats: NormalizationStats, window: int) -> Tuple[np.ndarray, np.ndarray, List[Tuple[str, int]]]:
    """
    把每顆電池切成不重疊的 W 步視窗（尾端不足 W 步的以缺值補齊）

    Returns:
        (x (K, n, W)，缺值為 0；m (K, n, W)；每顆電池的 (battery_id, 列數))
    """
    xs, ms, layout = [], [], []
    for battery_id, group in frame.groupby('battery_id', sort=True):
        values = stats.normalize(group[PARAMETERS].to_numpy(dtype=np.float64))
        steps = len(values)
        padded = -(-steps // window) * window
        values = np.vstack([values, np.full((padded - steps, values.shape[1]), np.nan)])
        chunks = values.reshape(padded // window, window, -1).transpose(0, 2, 1)
        ms.append((~np.isnan(chunks)).astype(np.float64))
        xs.append(np.nan_to_num(chunks))
        layout.append((str(battery_id), steps))
    if not xs:
        raise DataError("沒有任何電池可切窗")
    return np.concatenate(xs), np.concatenate(ms), layout


def _unwindow(chunks: np.ndarray, layout: List[Tuple[str, int]], window: int) -> np.ndarray:
    rows, offset = [], 0
    for _, steps in layout:
        k = -(-steps // window)
        rows.append(chunks[offset:offset + k].transpose(0, 2, 1).reshape(k * window, -1)[:steps])
        offset += k
    return np.vstack(rows)


def train_imputer(
    x: np.ndarray,
    m: np.ndarray,
    config: TrainConfig,
    seed: Optional[int] = None,
    steps: Optional[int] = None
) -> Tuple[GraphImputer, List[Dict[str, float]]]:
    """
    在遮罩視窗上交替訓練判別器與生成器

    Args:
        x / m: frame_windows 的輸出
        steps: 覆寫總步數；預設 gen_epochs 個 epoch

    Returns:
        (imputer, 每步的損失)
    """
    seed = config.seed if seed is None else seed
    check_mask(x, m)
    imputer = GraphImputer.create(config, x.shape[1], seed)
    g_opt = Adam(imputer.generator_params(), lr=config.lr)
    d_opt = Adam(imputer.discriminator_params(), lr=config.lr)
    streams = RngStreams(seed, 'imputer')

    n = len(x)
    per_epoch = -(-n // config.batch_size)
    total = config.gen_epochs * per_epoch if steps is None else steps
    logger.info(f"🩹 開始訓練補值模型：{n} 個視窗，{total} 步，觀測比例 {m.mean():.3f}")

    history: List[Dict[str, float]] = []
    for step in range(total):
        epoch, batch_index = divmod(step, per_epoch)
        if batch_index == 0:
            order = streams.get('shuffle', epoch).permutation(n)
        index = order[batch_index * config.batch_size:(batch_index + 1) * config.batch_size]
        rng = streams.child(epoch, batch_index)
        batch = MaskedBatch.sample(x[index], m[index], rng.get('noise'))
        history.append(wgan_train_step(batch, imputer, g_opt, d_opt, rng, config.rec_weight, config.hint_rate,
                                       config.grad_clip))

    if history:
        tail = pd.DataFrame(history[-per_epoch:]).mean()
        logger.info(f"✅ 補值模型完成：d_loss={tail['d_loss']:.4f} g_loss={tail['g_loss']:.4f} "
                    f"W 估計={tail['wasserstein']:.4f}")
    return imputer, history


def impute_frame(
    frame: pd.DataFrame,
    imputer: GraphImputer,
    stats: NormalizationStats,
    window: int,
    seed: int = 0
) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """
    補齊 frame 的缺值

    Returns:
        (補值後的 frame，遮罩 frame：battery_id,cycle,step + 每個參數 1=觀測 0=補值)
    """
    ordered = frame.sort_values(KEY_COLUMNS, kind='mergesort').reset_index(drop=True)
    x, m, layout = frame_windows(ordered, stats, window)
    imputed = wgan_impute(x, m, imputer, stream(seed, 'impute'))

    values = stats.denormalize(_unwindow(imputed, layout, window))
    observed = _unwindow(m, layout, window).astype(np.int64)
    result = ordered.copy()
    # 觀測位置沿用原始數值
    original = ordered[PARAMETERS].to_numpy(dtype=np.float64)
    result[PARAMETERS] = np.where(observed == 1, original, values)

    mask = ordered[KEY_COLUMNS].copy()
    mask[PARAMETERS] = observed
    logger.info(f"🩹 補值 {int((observed == 0).sum())} 個缺值")
    return result, mask


def mean_impute_frame(frame: pd.DataFrame, means: Optional[pd.Series] = None) -> pd.DataFrame:
    """基準：每個參數欄的缺值用平均值填入"""
    means = frame[PARAMETERS].mean() if means is None else means
    filled = frame.copy()
    filled[PARAMETERS] = filled[PARAMETERS].fillna(means)
    return filled
