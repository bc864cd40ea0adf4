"""
生成資料的再訓練比較（BGN vs BGN*）
Retraining with Generated Data

- augment: BGN 只用真實訓練資料；BGN* 另加 VAE 生成的樣本（或外部提供的合成 CSV）
- impute:  訓練資料先隨機遮蔽；BGN 用平均值補值，BGN* 用對抗式補值
兩列都用同一組種子、同一份乾淨的 val / test。
"""

from typing import Dict, Optional, Sequence

import numpy as np
import pandas as pd

from backend.data_sources.battery_csv import select_batteries
from backend.etl.windowing import NormalizationStats, SampleSet, fit_normalization
from backend.genmod.imputation import frame_windows, impute_frame, mask_frame, mean_impute_frame, train_imputer
from backend.genmod.vae import train_vae, vae_generate
from backend.scoring.metrics import format_mean_std, summarize
from backend.training.config import TrainConfig
from backend.training.experiments import run_tasks
from backend.training.trainer import RunResult, prepare_splits, train_one, windows_for
from config.logging_setup import setup_logger

logger = setup_logger(__name__)

RETRAIN_MODES = ('augment', 'impute')


def concat_samples(*sets: SampleSet) -> SampleSet:
    return SampleSet(
        features=np.concatenate([s.features for s in sets]),
        targets=np.concatenate([s.targets for s in sets]),
        battery_ids=np.concatenate([s.battery_ids for s in sets]),
        end_indices=np.concatenate([s.end_indices for s in sets]),
    )


def _retrain_task(
    config: TrainConfig,
    train: SampleSet,
    val: SampleSet,
    test: Optional[SampleSet],
    stats: NormalizationStats,
    seed: int
) -> RunResult:
    return train_one(config, train, val, stats, test=test, seed=seed)


def _augment_sets(config: TrainConfig, frame: pd.DataFrame, extra: Optional[pd.DataFrame]) -> Dict[str, object]:
    splits = prepare_splits(frame, config)
    if extra is not None:
        generated = windows_for(extra, config, splits.stats, 'extra')
        logger.info(f"🧬 使用外部合成資料 {len(generated)} 個樣本")
    else:
        vae, _ = train_vae(splits.train, config)
        generated = vae_generate(vae, config.n_generated, seed=config.seed).to_sample_set(config.window, config.stride)
        logger.info(f"🧬 VAE 生成 {len(generated)} 個樣本")
    return {
        'baseline': splits.train,
        'star': concat_samples(splits.train, generated),
        'val': splits.val,
        'test': splits.test,
        'stats': splits.stats,
    }


def _impute_sets(config: TrainConfig, frame: pd.DataFrame, extra: Optional[pd.DataFrame]) -> Dict[str, object]:
    splits = prepare_splits(frame, config)
    train_frame = select_batteries(frame, splits.battery_split['train'])
    masked = mask_frame(train_frame, config.mask_rate, config.seed)
    stats = fit_normalization(masked)

    baseline = windows_for(mean_impute_frame(masked), config, stats, 'train')
    if extra is not None:
        imputed = extra
    else:
        x, m, _ = frame_windows(masked, stats, config.window)
        imputer, _ = train_imputer(x, m, config)
        imputed, _ = impute_frame(masked, imputer, stats, config.window, seed=config.seed)
    star = windows_for(imputed, config, stats, 'train')

    val_frame = select_batteries(frame, splits.battery_split['val'])
    test_ids = splits.battery_split['test']
    return {
        'baseline': baseline,
        'star': star,
        'val': windows_for(val_frame, config, stats, 'val'),
        'test': windows_for(select_batteries(frame, test_ids), config, stats, 'test') if test_ids else None,
        'stats': stats,
    }


def retrain_with_generated(
    config: TrainConfig,
    frame: pd.DataFrame,
    mode: str = 'augment',
    extra: Optional[pd.DataFrame] = None,
    seeds: Optional[Sequence[int]] = None,
    jobs: int = 1
) -> pd.DataFrame:
    """
    BGN 與 BGN* 的比較表

    Args:
        mode: 'augment' 或 'impute'
        extra: augment 時為合成資料 CSV；impute 時為已補值的訓練資料（省略則在此訓練生成模型）
        seeds: 兩列共用的種子，預設 config.seed … config.seed + n_runs − 1

    Returns:
        兩列（BGN、BGN*），欄位 model、rmse、mae（'x ± y'）與數值欄
    """
    if mode not in RETRAIN_MODES:
        raise ValueError(f"mode 必須為 {RETRAIN_MODES}，收到 {mode}")
    seeds = list(seeds) if seeds is not None else [config.seed + r for r in range(config.n_runs)]
    sets = _augment_sets(config, frame, extra) if mode == 'augment' else _impute_sets(config, frame, extra)

    tasks = {}
    for label in ('baseline', 'star'):
        for seed in seeds:
            tasks[(label, seed)] = (config, sets[label], sets['val'], sets['test'], sets['stats'], seed)
    logger.info(f"🔁 {mode} 再訓練：BGN / BGN* × {len(seeds)} 個種子")
    results = run_tasks(_retrain_task, tasks, jobs)

    rows = []
    for label, name in (('baseline', 'BGN'), ('star', 'BGN*')):
        headline = [results[(label, seed)].headline() for seed in seeds]
        rmse = summarize([h.rmse for h in headline])
        mae = summarize([h.mae for h in headline])
        rows.append({
            'model': name,
            'rmse': format_mean_std(rmse['mean'], rmse['std']),
            'mae': format_mean_std(mae['mean'], mae['std']),
            'rmse_mean': rmse['mean'],
            'rmse_std': rmse['std'],
            'mae_mean': mae['mean'],
            'mae_std': mae['std'],
            'n_train': len(sets[label]),
            'n_seeds': len(seeds),
        })
    return pd.DataFrame(rows)
