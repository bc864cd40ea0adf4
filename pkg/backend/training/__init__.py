"""
訓練與實驗協定
Training and Experiment Protocols
"""

from .config import TrainConfig
from .experiments import (
    ABLATION_ROWS,
    DEFAULT_GRID,
    EnsembleResult,
    KFoldResult,
    run_ablation_suite,
    run_ensemble,
    run_grid,
    run_kfold,
)
from .trainer import RunResult, Splits, evaluate, init_parameters, prepare_splits, train_one

__all__ = [
    'TrainConfig',
    'ABLATION_ROWS', 'DEFAULT_GRID', 'EnsembleResult', 'KFoldResult',
    'run_ablation_suite', 'run_ensemble', 'run_grid', 'run_kfold',
    'RunResult', 'Splits', 'evaluate', 'init_parameters', 'prepare_splits', 'train_one',
]
