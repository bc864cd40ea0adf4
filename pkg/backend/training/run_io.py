"""
執行目錄讀寫
Run Directory I/O

    config.json       設定回聲
    checkpoint.bgn    最佳 epoch 的參數（含 BatchNorm buffer 與正規化統計）
    metrics.json      val / test 指標（sort_keys、無時間戳，重跑結果逐位元相同）
    curve.csv         epoch,train_loss,val_rmse,lr
    predictions.csv   battery_id,end_index,y_true,y_pred[,var]
"""

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Union

import pandas as pd

from backend.autodiff.checkpoint import load_checkpoint, save_checkpoint
from backend.errors import CheckpointError
from backend.etl.windowing import NormalizationStats
from backend.models.bgn import BgnModel
from backend.training.config import TrainConfig
from backend.training.trainer import RunResult, init_parameters
from config.logging_setup import setup_logger

logger = setup_logger(__name__)

CONFIG_FILE = 'config.json'
CHECKPOINT_FILE = 'checkpoint.bgn'
METRICS_FILE = 'metrics.json'
CURVE_FILE = 'curve.csv'
PREDICTIONS_FILE = 'predictions.csv'


def write_json(path: Union[str, Path], payload: Dict[str, Any]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + '\n', encoding='utf-8')
    return path


def write_frame(path: Union[str, Path], frame: pd.DataFrame) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, lineterminator='\n', encoding='utf-8')
    return path


def checkpoint_header(result: RunResult) -> Dict[str, Any]:
    return {
        'config': result.config.to_dict(),
        'model_spec': result.config.model_spec().to_dict(),
        'normalization': result.stats.to_dict(),
        'seed': result.seed,
        'best_epoch': result.best_epoch,
    }


def metrics_payload(result: RunResult) -> Dict[str, Any]:
    return {
        'val': result.val_report.to_dict(),
        'test': result.test_report.to_dict() if result.test_report is not None else None,
        'best_epoch': result.best_epoch,
        'epochs_run': len(result.curve),
        'lr_reductions': result.lr_reductions,
        'stopped_early': result.stopped_early,
        'seed': result.seed,
    }


def write_run(run_dir: Union[str, Path], result: RunResult) -> Path:
    """寫出完整的執行目錄"""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    write_json(run_dir / CONFIG_FILE, result.config.to_dict())
    save_checkpoint(run_dir / CHECKPOINT_FILE, result.best_arrays, checkpoint_header(result))
    write_json(run_dir / METRICS_FILE, metrics_payload(result))
    write_frame(run_dir / CURVE_FILE, result.curve_frame())
    write_frame(run_dir / PREDICTIONS_FILE, result.predictions)
    logger.info(f"💾 執行結果寫入 {run_dir}")
    return run_dir


@dataclass
class LoadedRun:
    config: TrainConfig
    stats: NormalizationStats
    model: BgnModel
    header: Dict[str, Any]


def load_run(run_dir: Union[str, Path], checkpoint: Optional[Union[str, Path]] = None) -> LoadedRun:
    """
    從執行目錄（或單一檢查點檔）還原模型

    Raises:
        CheckpointError: 檢查點缺少設定或參數不符
    """
    path = Path(checkpoint) if checkpoint is not None else Path(run_dir) / CHECKPOINT_FILE
    header, arrays = load_checkpoint(path)
    try:
        config = TrainConfig.from_dict(header['config'])
        stats = NormalizationStats.from_dict(header['normalization'])
        seed = int(header.get('seed', config.seed))
    except KeyError as exc:
        raise CheckpointError(f"檢查點缺少欄位: {exc}") from exc

    params = init_parameters(config, seed)
    params.load_state_arrays(arrays)
    return LoadedRun(config=config, stats=stats, model=BgnModel(params, config.model_spec()), header=header)
