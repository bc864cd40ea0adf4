"""
BGN 訓練器
BGN Trainer

小批次 Adam；每個 epoch 結束後在驗證集計算 RMSE：
- 連續 scheduler_patience 個 epoch 沒有改善時學習率減半
- 連續 early_stop_patience 個 epoch 沒有改善時提前停止
- 回傳驗證 RMSE 最佳的那一個 epoch 的參數
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from backend.autodiff.optim import Adam, EarlyStopping, PlateauScheduler, clip_grad_norm
from backend.autodiff.rng import RngStreams
from backend.autodiff.tensor import Tensor
from backend.data_sources.battery_csv import select_batteries
from backend.errors import DataError, NonFiniteError, TrainingError
from backend.etl.windowing import (
    NormalizationStats,
    SampleSet,
    fit_normalization,
    make_windows,
    split_batteries,
    stack_samples,
)
from backend.models.bgn import GRADIENT_GROUPS, BgnModel, ModelOutput, build_parameters
from backend.models.parameters import BgnParameters
from backend.scoring.losses import gaussian_nll_loss, mse_loss
from backend.scoring.metrics import MetricsReport
from backend.training.config import TrainConfig
from config.logging_setup import setup_logger

logger = setup_logger(__name__)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_rmse: float
    lr: float


@dataclass
class Splits:
    """已切窗的 train / val / test 與訓練集正規化統計"""
    train: SampleSet
    val: SampleSet
    test: Optional[SampleSet]
    stats: NormalizationStats
    battery_split: Dict[str, List[str]] = field(default_factory=dict)


@dataclass
class RunResult:
    """一次訓練的結果（最佳 epoch 的參數與報告）"""
    config: TrainConfig
    seed: int
    stats: NormalizationStats
    best_epoch: int
    best_arrays: Dict[str, np.ndarray]
    val_report: MetricsReport
    test_report: Optional[MetricsReport]
    curve: List[EpochRecord]
    predictions: pd.DataFrame
    stopped_early: bool = False
    lr_reductions: int = 0

    def curve_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [(r.epoch, r.train_loss, r.val_rmse, r.lr) for r in self.curve],
            columns=['epoch', 'train_loss', 'val_rmse', 'lr'],
        )

    def build_model(self) -> BgnModel:
        params = init_parameters(self.config, self.seed)
        params.load_state_arrays(self.best_arrays)
        return BgnModel(params, self.config.model_spec())

    def headline(self) -> MetricsReport:
        return self.test_report if self.test_report is not None else self.val_report


# ========== 資料準備 ==========

def windows_for(frame: pd.DataFrame, config: TrainConfig, stats: NormalizationStats, name: str) -> SampleSet:
    samples = make_windows(frame, config.window, config.stride, config.seq_len, stats)
    if not samples:
        raise DataError(
            f"{name} 切不出任何樣本（W={config.window}, stride={config.stride}, S={config.seq_len}），"
            f"請確認每顆電池的步數足夠"
        )
    return stack_samples(samples)


def prepare_frames(
    train_frame: pd.DataFrame,
    val_frame: pd.DataFrame,
    test_frame: Optional[pd.DataFrame],
    config: TrainConfig
) -> Splits:
    """只用訓練集擬合正規化，再套用到 val / test"""
    stats = fit_normalization(train_frame)
    return Splits(
        train=windows_for(train_frame, config, stats, 'train'),
        val=windows_for(val_frame, config, stats, 'val'),
        test=windows_for(test_frame, config, stats, 'test') if test_frame is not None and len(test_frame) else None,
        stats=stats,
    )


def prepare_splits(frame: pd.DataFrame, config: TrainConfig, seed: Optional[int] = None) -> Splits:
    """依電池切成 train / val / test 並切窗"""
    ids = list(pd.unique(frame['battery_id']))
    train_ids, val_ids, test_ids = split_batteries(
        ids, config.val_fraction, config.test_fraction, config.seed if seed is None else seed
    )
    splits = prepare_frames(
        select_batteries(frame, train_ids),
        select_batteries(frame, val_ids),
        select_batteries(frame, test_ids) if test_ids else None,
        config,
    )
    splits.battery_split = {'train': train_ids, 'val': val_ids, 'test': test_ids}
    logger.info(f"📦 電池切分 train={len(train_ids)} val={len(val_ids)} test={len(test_ids)}；"
                f"樣本 train={len(splits.train)} val={len(splits.val)} "
                f"test={len(splits.test) if splits.test is not None else 0}")
    return splits


# ========== 訓練 ==========

def init_parameters(config: TrainConfig, seed: Optional[int] = None) -> BgnParameters:
    """依設定建立並初始化參數；同一 seed 逐位元相同"""
    return build_parameters(config.model_spec(), config.seed if seed is None else seed)


def batch_loss(output: ModelOutput, targets: np.ndarray, config: TrainConfig) -> Tensor:
    """BGN 用 MSE；BGN-UE 用高斯 NLL（nll_reduction='mean' 時除以批次大小）"""
    if config.variant == 'bgn':
        return mse_loss(output.pred, targets).value
    loss = gaussian_nll_loss(output.pred, output.var, targets).value
    if config.nll_reduction == 'mean':
        loss = loss * (1.0 / len(targets))
    return loss


def evaluate(model: BgnModel, samples: SampleSet, stats: NormalizationStats) -> Tuple[MetricsReport, pd.DataFrame]:
    """
    評估模式預測並計算指標（原始 RUL 單位）

    Returns:
        (MetricsReport, predictions DataFrame)
    """
    pred, var = model.predict(samples.features)
    report = MetricsReport.compute(pred, samples.targets, denorm=stats.rul_max)
    frame = pd.DataFrame({
        'battery_id': samples.battery_ids.astype(str),
        'end_index': samples.end_indices,
        'y_true': samples.targets * stats.rul_max,
        'y_pred': pred * stats.rul_max,
    })
    if var is not None:
        frame['var'] = var * stats.rul_max ** 2
    return report, frame


def train_one(
    config: TrainConfig,
    train: SampleSet,
    val: SampleSet,
    stats: NormalizationStats,
    test: Optional[SampleSet] = None,
    seed: Optional[int] = None
) -> RunResult:
    """
    訓練一個模型

    Args:
        config: 訓練設定
        train / val / test: 切窗後的樣本
        stats: 訓練集的正規化統計
        seed: 覆寫 config.seed（ensemble 每次執行不同）

    Returns:
        RunResult（參數為驗證 RMSE 最佳的 epoch）

    Raises:
        TrainingError: 損失或梯度出現非有限值
    """
    if len(train) == 0 or len(val) == 0:
        raise DataError("train_one: 訓練集與驗證集都不可為空")
    seed = config.seed if seed is None else seed

    params = init_parameters(config, seed)
    model = BgnModel(params, config.model_spec())
    optimizer = Adam(params.tensors, lr=config.lr)
    scheduler = PlateauScheduler(optimizer, factor=0.5, patience=config.scheduler_patience)
    stopper = EarlyStopping(patience=config.early_stop_patience)
    streams = RngStreams(seed, 'train')

    label = f"{config.variant}/{config.ablation} seed={seed}"
    logger.info(f"🚀 開始訓練 {label}: {params.count()} 個參數，{len(train)} 個訓練樣本")

    curve: List[EpochRecord] = []
    best_arrays = params.state_arrays()
    stopped_early = False
    n = len(train)

    for epoch in range(1, config.max_epochs + 1):
        order = streams.get('shuffle', epoch).permutation(n)
        lr = optimizer.lr
        losses = []
        for batch_index, start in enumerate(range(0, n, config.batch_size)):
            index = order[start:start + config.batch_size]
            try:
                optimizer.zero_grad()
                output = model.forward(train.features[index], training=True, rng=streams.child(epoch, batch_index))
                loss = batch_loss(output, train.targets[index], config)
                loss.backward()
                clip_grad_norm(params.tensors, config.grad_clip)
                optimizer.step()
            except NonFiniteError as exc:
                raise TrainingError(f"{label} 在 epoch {epoch} batch {batch_index} 發散: {exc}") from exc
            losses.append(loss.item())

        train_loss = float(np.mean(losses))
        val_report, _ = evaluate(model, val, stats)
        val_rmse = val_report.rmse
        curve.append(EpochRecord(epoch, train_loss, val_rmse, lr))

        if stopper.update(val_rmse, epoch):
            best_arrays = params.state_arrays()
        logger.info(f"epoch {epoch:3d} | train_loss={train_loss:.6f} | val_rmse={val_rmse:.4f} | lr={lr:.2e}")

        if scheduler.step(val_rmse):
            logger.warning(f"⚠️  驗證 RMSE 停滯 {config.scheduler_patience} 個 epoch，學習率減半為 {optimizer.lr:.2e}")
        if stopper.should_stop:
            logger.warning(f"⏹️  早停於 epoch {epoch}（最佳 epoch {stopper.best_epoch}）")
            stopped_early = True
            break

    params.load_state_arrays(best_arrays)
    val_report, val_predictions = evaluate(model, val, stats)
    test_report, predictions = (None, val_predictions)
    if test is not None and len(test):
        test_report, predictions = evaluate(model, test, stats)

    logger.info(f"✅ {label} 完成：最佳 epoch {stopper.best_epoch}，val RMSE {val_report.rmse:.4f}"
                + (f"，test RMSE {test_report.rmse:.4f}" if test_report else ""))

    return RunResult(
        config=config,
        seed=seed,
        stats=stats,
        best_epoch=stopper.best_epoch,
        best_arrays=best_arrays,
        val_report=val_report,
        test_report=test_report,
        curve=curve,
        predictions=predictions,
        stopped_early=stopped_early,
        lr_reductions=scheduler.reductions,
    )


def train_splits(config: TrainConfig, splits: Splits, seed: Optional[int] = None) -> RunResult:
    return train_one(config, splits.train, splits.val, splits.stats, test=splits.test, seed=seed)


def probe_gradient_flow(config: TrainConfig, samples: SampleSet, seed: Optional[int] = None) -> Dict[str, float]:
    """
    在一個批次上做一次前向 / 反向，回傳各參數群組的梯度範數

    用來確認 DGI 路徑沒有被意外切斷。
    """
    seed = config.seed if seed is None else seed
    params = init_parameters(config, seed)
    model = BgnModel(params, config.model_spec())
    batch = samples.subset(np.arange(min(len(samples), config.batch_size)))
    output = model.forward(batch.features, training=True, rng=RngStreams(seed, 'probe'))
    batch_loss(output, batch.targets, config).backward()
    groups = {label: prefix for label, prefix in GRADIENT_GROUPS.items() if params.group(prefix)}
    return params.grad_norms(groups)
