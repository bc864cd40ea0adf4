"""
實驗協定
Experiment Protocols

- run_kfold:          以電池為單位的 k 折交叉驗證，彙整 fold 驗證 RMSE 的 mean ± std
- run_ensemble:       固定切分、n_runs 個種子，彙整每個指標的 mean ± std（母體標準差）
- run_ablation_suite: BGN 與五種消融在相同種子與切分下的比較表
- run_grid:           embedding_dim × hidden_dim × lr 的網格搜尋

各次訓練彼此獨立；jobs > 1 時交給 ProcessPoolExecutor，結果依鍵合併，與完成順序無關。
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from itertools import product
from typing import Any, Callable, Dict, Hashable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from backend.data_sources.battery_csv import select_batteries
from backend.etl.windowing import kfold_split
from backend.scoring.metrics import EnsembleReport, flatten_report, format_mean_std, summarize
from backend.training.config import TrainConfig
from backend.training.trainer import RunResult, prepare_frames, prepare_splits, train_splits
from config.logging_setup import setup_logger

logger = setup_logger(__name__)

# (ablation, 表格列名)
ABLATION_ROWS = [
    ('none', 'BGN'),
    ('fcg', 'w/ fcg'),
    ('no_embeddings', 'w/o b_i'),
    ('no_features', 'w/o x_i^t'),
    ('no_gnn', 'w/o GNN'),
    ('no_rnn', 'w/o RNN'),
]

DEFAULT_GRID = {
    'embedding_dim': (16, 32, 48, 64, 96, 128),
    'hidden_dim': (16, 32, 48, 64, 96, 128),
    'lr': (0.1, 0.01, 0.001, 0.0001),
}


# ========== 平行執行 ==========

def _train_task(config: TrainConfig, frame: pd.DataFrame, split_seed: int, seed: int) -> RunResult:
    return train_splits(config, prepare_splits(frame, config, seed=split_seed), seed=seed)


def _fold_task(config: TrainConfig, train_frame: pd.DataFrame, val_frame: pd.DataFrame, seed: int) -> RunResult:
    return train_splits(config, prepare_frames(train_frame, val_frame, None, config), seed=seed)


def run_tasks(
    fn: Callable[..., Any],
    tasks: Mapping[Hashable, Tuple],
    jobs: int = 1
) -> Dict[Hashable, Any]:
    """
    執行一組獨立任務

    Args:
        fn: 模組層級函數（需可被 pickle）
        tasks: 鍵 → 參數 tuple
        jobs: 平行行程數，1 為循序執行

    Returns:
        鍵 → 結果，順序同 tasks
    """
    if jobs <= 1 or len(tasks) <= 1:
        return {key: fn(*args) for key, args in tasks.items()}

    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = {key: pool.submit(fn, *args) for key, args in tasks.items()}
        done = {key: future.result() for key, future in futures.items()}
    return {key: done[key] for key in tasks}


# ========== k 折 ==========

@dataclass
class KFoldResult:
    folds: List[RunResult]
    val_rmse_mean: float
    val_rmse_std: float

    def table(self) -> pd.DataFrame:
        rows = [{'fold': i, **flatten_report(r.val_report)} for i, r in enumerate(self.folds)]
        return pd.DataFrame(rows)


def run_kfold(config: TrainConfig, frame: pd.DataFrame, k: Optional[int] = None, jobs: int = 1) -> KFoldResult:
    """
    k 折交叉驗證（每折各自用訓練電池擬合正規化）

    Returns:
        每折結果與 fold 驗證 RMSE 的 mean ± std
    """
    k = config.k_folds if k is None else k
    ids = list(pd.unique(frame['battery_id']))
    partitions = kfold_split(ids, k=k, seed=config.seed)
    id_array = np.asarray(ids, dtype=object)

    tasks = {}
    for fold, (train_idx, val_idx) in enumerate(partitions):
        tasks[fold] = (
            config,
            select_batteries(frame, id_array[train_idx]),
            select_batteries(frame, id_array[val_idx]),
            config.seed,
        )
    logger.info(f"🔁 {k} 折交叉驗證，{len(ids)} 顆電池")
    results = run_tasks(_fold_task, tasks, jobs)
    folds = [results[f] for f in sorted(results)]

    summary = summarize([r.val_report.rmse for r in folds])
    logger.info(f"📊 k 折驗證 RMSE {format_mean_std(summary['mean'], summary['std'])}")
    return KFoldResult(folds=folds, val_rmse_mean=summary['mean'], val_rmse_std=summary['std'])


# ========== 多次執行 ==========

@dataclass
class EnsembleResult:
    runs: List[RunResult]
    val: EnsembleReport
    test: Optional[EnsembleReport]

    def headline(self) -> EnsembleReport:
        return self.test if self.test is not None else self.val


def ensemble_seeds(config: TrainConfig, n_runs: Optional[int] = None) -> List[int]:
    n_runs = config.n_runs if n_runs is None else n_runs
    if n_runs < 1:
        raise ValueError(f"n_runs 必須 ≥ 1，收到 {n_runs}")
    return [config.seed + r for r in range(n_runs)]


def run_ensemble(
    config: TrainConfig,
    frame: pd.DataFrame,
    n_runs: Optional[int] = None,
    jobs: int = 1,
    seeds: Optional[Sequence[int]] = None
) -> EnsembleResult:
    """
    固定電池切分，用 n_runs 個種子各訓練一次，回報指標的 mean ± std

    Args:
        seeds: 直接指定種子（可重複，用來確認相同種子的 std 為 0）
    """
    seeds = list(seeds) if seeds is not None else ensemble_seeds(config, n_runs)
    tasks = {r: (config, frame, config.seed, seed) for r, seed in enumerate(seeds)}
    logger.info(f"🎲 ensemble {len(seeds)} 次執行，種子 {seeds}")
    results = run_tasks(_train_task, tasks, jobs)
    runs = [results[r] for r in sorted(results)]

    val = EnsembleReport.aggregate(r.val_report for r in runs)
    tests = [r.test_report for r in runs if r.test_report is not None]
    test = EnsembleReport.aggregate(tests) if len(tests) == len(runs) else None
    return EnsembleResult(runs=runs, val=val, test=test)


# ========== 消融 ==========

def run_ablation_suite(
    config: TrainConfig,
    frame: pd.DataFrame,
    seeds: Optional[Sequence[int]] = None,
    jobs: int = 1
) -> pd.DataFrame:
    """
    BGN 與五種消融，相同的種子與電池切分

    Returns:
        6 列的比較表（variant、test_rmse 等欄位，另附 'x ± y' 文字欄）
    """
    seeds = list(seeds) if seeds is not None else [config.seed]
    tasks = {}
    for ablation, _ in ABLATION_ROWS:
        variant_config = config.evolve(ablation=ablation)
        for seed in seeds:
            tasks[(ablation, seed)] = (variant_config, frame, config.seed, seed)

    logger.info(f"🧪 消融實驗：{len(ABLATION_ROWS)} 種變體 × {len(seeds)} 個種子")
    results = run_tasks(_train_task, tasks, jobs)

    rows = []
    for ablation, label in ABLATION_ROWS:
        runs = [results[(ablation, seed)] for seed in seeds]
        headline = [r.headline() for r in runs]
        rmse = summarize([h.rmse for h in headline])
        mae = summarize([h.mae for h in headline])
        rows.append({
            'variant': label,
            'ablation': ablation,
            'rmse_mean': rmse['mean'],
            'rmse_std': rmse['std'],
            'mae_mean': mae['mean'],
            'mae_std': mae['std'],
            'val_rmse_mean': summarize([r.val_report.rmse for r in runs])['mean'],
            'n_seeds': len(seeds),
            'rmse': format_mean_std(rmse['mean'], rmse['std']),
            'per_seed_rmse': ' '.join(f"{h.rmse:.4f}" for h in headline),
        })
    return pd.DataFrame(rows)


# ========== 網格搜尋 ==========

def grid_points(grid: Mapping[str, Sequence[Any]]) -> List[Dict[str, Any]]:
    if not grid or any(len(v) == 0 for v in grid.values()):
        raise ValueError("網格不可為空")
    axes = sorted(grid)
    return [dict(zip(axes, values)) for values in product(*(sorted(grid[a]) for a in axes))]


def run_grid(
    config: TrainConfig,
    frame: pd.DataFrame,
    grid: Optional[Mapping[str, Sequence[Any]]] = None,
    jobs: int = 1
) -> pd.DataFrame:
    """
    交叉乘積的網格搜尋

    Returns:
        每個網格點一列：軸的值 + mae、rmse、approx_1 … approx_40，依軸做字典序排序
    """
    grid = DEFAULT_GRID if grid is None else grid
    unknown = sorted(set(grid) - TrainConfig.field_names())
    if unknown:
        raise ValueError(f"網格含未知的設定鍵: {unknown}")
    points = grid_points(grid)
    tasks = {
        tuple(point.items()): (config.evolve(**point), frame, config.seed, config.seed)
        for point in points
    }
    logger.info(f"🔍 網格搜尋 {len(points)} 個點")
    results = run_tasks(_train_task, tasks, jobs)

    rows = []
    for key, result in results.items():
        report = result.headline()
        rows.append({**dict(key), **flatten_report(report)})
    axes = sorted(grid)
    ordered = ['mae', 'rmse'] + [c for c in rows[0] if c.startswith('approx_')]
    return pd.DataFrame(rows)[axes + ordered].sort_values(axes, kind='mergesort').reset_index(drop=True)


def render_table(frame: pd.DataFrame, columns: Optional[Sequence[str]] = None) -> str:
    """純文字表格（CLI 輸出到檔案用）"""
    view = frame if columns is None else frame[list(columns)]
    return view.to_string(index=False) + '\n'
