"""
評估指標
Evaluation Metrics

RMSE、MAE 與近似誤差表（預測誤差 < 門檻的樣本百分比），皆在原始 RUL 單位（cycles）計算。
"""

from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence

import numpy as np
import pandas as pd

from backend.errors import ShapeError

APPROX_THRESHOLDS = (1, 2, 3, 10, 20, 40)


def _pair(pred, target, denorm: float = 1.0):
    pred = np.asarray(pred, dtype=np.float64).reshape(-1) * denorm
    target = np.asarray(target, dtype=np.float64).reshape(-1) * denorm
    if pred.shape != target.shape:
        raise ShapeError(f"預測 {pred.shape} 與目標 {target.shape} 長度不符")
    return pred, target


def rmse(pred, target, denorm: float = 1.0) -> float:
    """sqrt(mean((ŷ − y)²))，先乘上 denorm 還原成 cycles"""
    pred, target = _pair(pred, target, denorm)
    if pred.size == 0:
        raise ShapeError("rmse: 樣本數為 0")
    return float(np.sqrt(np.mean((pred - target) ** 2)))


def mae(pred, target, denorm: float = 1.0) -> float:
    pred, target = _pair(pred, target, denorm)
    if pred.size == 0:
        raise ShapeError("mae: 樣本數為 0")
    return float(np.mean(np.abs(pred - target)))


def approximation_error_table(
    pred,
    target,
    thresholds: Sequence[float] = APPROX_THRESHOLDS,
    denorm: float = 1.0
) -> Dict[float, float]:
    """
    每個門檻 τ：100 · |{t : |ŷ_t − y_t| < τ}| / N（嚴格小於）

    Raises:
        ShapeError: 空資料
        ValueError: 門檻未遞增排序
    """
    pred, target = _pair(pred, target, denorm)
    if pred.size == 0:
        raise ShapeError("approximation_error_table: 樣本數為 0")
    if list(thresholds) != sorted(thresholds):
        raise ValueError(f"門檻必須遞增排序: {list(thresholds)}")
    errors = np.abs(pred - target)
    return {tau: float(100.0 * np.count_nonzero(errors < tau) / errors.size) for tau in thresholds}


def _threshold_key(tau) -> str:
    return str(int(tau)) if float(tau).is_integer() else str(tau)


@dataclass
class MetricsReport:
    """單次評估的指標"""
    rmse: float
    mae: float
    approx_error: Dict[float, float]
    n_samples: int

    @classmethod
    def compute(cls, pred, target, denorm: float = 1.0,
                thresholds: Sequence[float] = APPROX_THRESHOLDS) -> 'MetricsReport':
        pred_arr, _ = _pair(pred, target)
        return cls(
            rmse=rmse(pred, target, denorm),
            mae=mae(pred, target, denorm),
            approx_error=approximation_error_table(pred, target, thresholds, denorm),
            n_samples=int(pred_arr.size),
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            'rmse': self.rmse,
            'mae': self.mae,
            'approx_error': {_threshold_key(k): v for k, v in self.approx_error.items()},
            'n': self.n_samples,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> 'MetricsReport':
        return cls(
            rmse=float(data['rmse']),
            mae=float(data['mae']),
            approx_error={float(k): float(v) for k, v in data['approx_error'].items()},
            n_samples=int(data['n']),
        )


@dataclass
class EnsembleReport:
    """多次執行的 mean ± std（母體標準差）"""
    mean: Dict[str, float]
    std: Dict[str, float]
    runs: List[MetricsReport] = field(default_factory=list)

    @classmethod
    def aggregate(cls, reports: Iterable[MetricsReport]) -> 'EnsembleReport':
        reports = list(reports)
        if not reports:
            raise ValueError("至少需要一次執行的結果")
        frame = pd.DataFrame([flatten_report(r) for r in reports])
        return cls(
            mean={k: float(v) for k, v in frame.mean(axis=0).items()},
            std={k: float(v) for k, v in frame.std(axis=0, ddof=0).items()},
            runs=reports,
        )

    def cell(self, metric: str, digits: int = 3) -> str:
        return format_mean_std(self.mean[metric], self.std[metric], digits)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'mean': self.mean,
            'std': self.std,
            'runs': [r.to_dict() for r in self.runs],
        }


def flatten_report(report: MetricsReport) -> Dict[str, float]:
    """rmse / mae / approx_<τ> 的扁平字典（表格欄位用）"""
    row = {'rmse': report.rmse, 'mae': report.mae}
    for tau, value in report.approx_error.items():
        row[f'approx_{_threshold_key(tau)}'] = value
    return row


def format_mean_std(mean: float, std: float, digits: int = 3) -> str:
    return f"{mean:.{digits}f} ± {std:.{digits}f}"


def summarize(values: Sequence[float]) -> Optional[Dict[str, float]]:
    """mean 與母體 std；空序列回傳 None"""
    if len(values) == 0:
        return None
    arr = np.asarray(values, dtype=np.float64)
    return {'mean': float(arr.mean()), 'std': float(arr.std())}
