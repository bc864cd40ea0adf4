"""
正規化、切窗與資料切分
Normalization, Windowing and Splits

流程：
1. fit_normalization 只用訓練集電池計算每個參數的 min / max 與 rul_max
2. make_windows 對每顆電池各自切出長度 W、間隔 stride 的視窗，再把連續 S 個視窗組成一個樣本
3. kfold_split / split_batteries 以電池為單位切分，同一顆電池的視窗不會跨集合
"""

from dataclasses import dataclass
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from numpy.lib.stride_tricks import sliding_window_view

from backend.autodiff.rng import stream
from backend.data_sources.battery_csv import PARAMETERS
from backend.errors import DataError
from config.logging_setup import setup_logger

logger = setup_logger(__name__)

CLAMP_RANGE = (-0.5, 1.5)


# ========== 正規化 ==========

@dataclass
class NormalizationStats:
    """訓練集的 min-max 統計（隨檢查點保存）"""
    mins: np.ndarray
    maxs: np.ndarray
    rul_max: float

    def normalize(self, values: np.ndarray) -> np.ndarray:
        """最後一維為 6 個參數"""
        return (np.asarray(values, dtype=np.float64) - self.mins) / (self.maxs - self.mins)

    def denormalize(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values, dtype=np.float64) * (self.maxs - self.mins) + self.mins

    def to_dict(self) -> Dict[str, Any]:
        return {
            'parameters': list(PARAMETERS),
            'mins': [float(v) for v in self.mins],
            'maxs': [float(v) for v in self.maxs],
            'rul_max': float(self.rul_max),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> 'NormalizationStats':
        try:
            return cls(
                mins=np.asarray(data['mins'], dtype=np.float64),
                maxs=np.asarray(data['maxs'], dtype=np.float64),
                rul_max=float(data['rul_max']),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"正規化統計格式錯誤: {exc}") from exc


def fit_normalization(frame: pd.DataFrame) -> NormalizationStats:
    """
    由訓練集計算每個參數的 min / max（忽略 NaN）與 rul_max

    Raises:
        DataError: 空資料、某參數為常數（max = min）、rul_max 不為正
    """
    if len(frame) == 0:
        raise DataError("fit_normalization: 訓練資料為空")
    values = frame[PARAMETERS].to_numpy(dtype=np.float64)
    if np.isnan(values).all(axis=0).any():
        column = PARAMETERS[int(np.flatnonzero(np.isnan(values).all(axis=0))[0])]
        raise DataError(f"fit_normalization: 參數 {column} 全為缺值")
    mins = np.nanmin(values, axis=0)
    maxs = np.nanmax(values, axis=0)
    for name, lo, hi in zip(PARAMETERS, mins, maxs):
        if not hi > lo:
            raise DataError(f"fit_normalization: 參數 {name} 為常數 ({lo})，無法正規化")
    rul_max = float(frame['rul'].max())
    if not rul_max > 0:
        raise DataError("fit_normalization: rul_max 必須為正")
    return NormalizationStats(mins=mins, maxs=maxs, rul_max=rul_max)


# ========== 切窗 ==========

@dataclass
class WindowSequenceSample:
    """一個訓練樣本：S 個連續視窗與序列末端的正規化 RUL"""
    features: np.ndarray          # (S, n, W)
    target: float
    battery_id: str
    end_index: int                # 最後一個視窗最後一步在該電池內的列位置


@dataclass
class SampleSet:
    """堆疊後的樣本（訓練器使用）"""
    features: np.ndarray          # (N, S, n, W)
    targets: np.ndarray           # (N,)
    battery_ids: np.ndarray       # (N,) 字串
    end_indices: np.ndarray       # (N,)

    def __len__(self) -> int:
        return int(self.targets.shape[0])

    def subset(self, index) -> 'SampleSet':
        index = np.asarray(index)
        return SampleSet(
            features=self.features[index],
            targets=self.targets[index],
            battery_ids=self.battery_ids[index],
            end_indices=self.end_indices[index],
        )

    def for_batteries(self, ids: Sequence[str]) -> 'SampleSet':
        return self.subset(np.flatnonzero(np.isin(self.battery_ids, list(ids))))

    def unique_batteries(self) -> List[str]:
        return sorted(set(self.battery_ids.tolist()))

    @classmethod
    def from_samples(cls, samples: Sequence[WindowSequenceSample]) -> 'SampleSet':
        if not samples:
            raise DataError("沒有任何樣本可堆疊")
        return cls(
            features=np.stack([s.features for s in samples]),
            targets=np.asarray([s.target for s in samples], dtype=np.float64),
            battery_ids=np.asarray([s.battery_id for s in samples], dtype=object),
            end_indices=np.asarray([s.end_index for s in samples], dtype=np.int64),
        )

    def to_samples(self) -> List[WindowSequenceSample]:
        return [
            WindowSequenceSample(self.features[i], float(self.targets[i]), str(self.battery_ids[i]), int(self.end_indices[i]))
            for i in range(len(self))
        ]


def count_windows(steps: int, window: int, stride: int, seq_len: int) -> int:
    """一顆 steps 列的電池可切出的樣本數"""
    if steps < window:
        return 0
    n_windows = (steps - window) // stride + 1
    return max(0, n_windows - seq_len + 1)


def _check_window_args(window: int, stride: int, seq_len: int) -> None:
    for name, value in (('W', window), ('stride', stride), ('S', seq_len)):
        if int(value) != value or value <= 0:
            raise DataError(f"make_windows: {name} 必須為正整數，收到 {value}")


def battery_windows(
    values: np.ndarray,
    rul: np.ndarray,
    window: int,
    stride: int,
    seq_len: int,
    rul_max: float
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    單顆電池的視窗序列

    Args:
        values: (T, n) 已正規化的參數
        rul: (T,)

    Returns:
        (features (m', S, n, W), targets (m',), end_indices (m',))
    """
    steps, n = values.shape
    count = count_windows(steps, window, stride, seq_len)
    if count == 0:
        return np.zeros((0, seq_len, n, window)), np.zeros(0), np.zeros(0, dtype=np.int64)

    # (m, n, W)：第 k 個視窗從第 k*stride 步開始
    windows = sliding_window_view(values, window, axis=0)[::stride]
    # (m', n, W, S) → (m', S, n, W)
    sequences = sliding_window_view(windows, seq_len, axis=0).transpose(0, 3, 1, 2)
    ends = np.arange(count, dtype=np.int64) * stride + (seq_len - 1) * stride + window - 1
    targets = np.clip(rul[ends] / rul_max, 0.0, 1.0)
    return np.ascontiguousarray(sequences, dtype=np.float64), targets, ends


def make_windows(
    frame: pd.DataFrame,
    window: int,
    stride: int,
    seq_len: int,
    stats: NormalizationStats,
    allow_missing: bool = False
) -> List[WindowSequenceSample]:
    """
    切出所有電池的視窗序列樣本（不跨電池）

    正規化後的特徵截斷在 [-0.5, 1.5]，被截斷的數量以 WARNING 記錄。

    Args:
        frame: 已依 (battery_id, cycle, step) 排序的資料
        window: 每個視窗的步數 W
        stride: 視窗間隔
        seq_len: 每個樣本的視窗數 S
        stats: 訓練集的正規化統計（不會重新計算）
        allow_missing: 允許 NaN 特徵（補值流程）

    Returns:
        依 (battery_id, end_index) 排序的樣本
    """
    _check_window_args(window, stride, seq_len)
    samples: List[WindowSequenceSample] = []
    clamped = 0

    for battery_id, group in frame.groupby('battery_id', sort=True):
        values = stats.normalize(group[PARAMETERS].to_numpy(dtype=np.float64))
        if not allow_missing and np.isnan(values).any():
            raise DataError(f"make_windows: 電池 {battery_id} 含缺值，請先補值")
        outside = (values < CLAMP_RANGE[0]) | (values > CLAMP_RANGE[1])
        clamped += int(np.count_nonzero(outside))
        values = np.where(np.isnan(values), values, np.clip(values, *CLAMP_RANGE))

        features, targets, ends = battery_windows(
            values, group['rul'].to_numpy(dtype=np.float64), window, stride, seq_len, stats.rul_max
        )
        for i in range(len(targets)):
            samples.append(WindowSequenceSample(features[i], float(targets[i]), str(battery_id), int(ends[i])))

    if clamped:
        logger.warning(f"⚠️  {clamped} 個正規化特徵超出 {CLAMP_RANGE}，已截斷")
    logger.debug(f"切出 {len(samples)} 個樣本 (W={window}, stride={stride}, S={seq_len})")
    return samples


def stack_samples(samples: Sequence[WindowSequenceSample]) -> SampleSet:
    return SampleSet.from_samples(samples)


# ========== 切分 ==========

def _ids_of(samples: Union[SampleSet, Sequence[WindowSequenceSample], Sequence[str]]) -> np.ndarray:
    if isinstance(samples, SampleSet):
        return samples.battery_ids
    return np.asarray([s.battery_id if isinstance(s, WindowSequenceSample) else s for s in samples], dtype=object)


def kfold_split(
    samples: Union[SampleSet, Sequence[WindowSequenceSample]],
    k: int = 10,
    seed: int = 0
) -> List[Tuple[np.ndarray, np.ndarray]]:
    """
    以電池為單位的 k 折切分

    Returns:
        k 組 (train 樣本索引, val 樣本索引)

    Raises:
        DataError: k < 2 或電池數少於 k
    """
    if k < 2:
        raise DataError(f"kfold_split: k 必須 ≥ 2，收到 {k}")
    ids = _ids_of(samples)
    batteries = np.asarray(sorted(set(ids.tolist())), dtype=object)
    if len(batteries) < k:
        raise DataError(f"kfold_split: 只有 {len(batteries)} 顆電池，不足 k={k} 折")

    order = stream(seed, 'kfold').permutation(len(batteries))
    folds = np.array_split(batteries[order], k)

    partitions = []
    for held_out in folds:
        val_mask = np.isin(ids, held_out)
        partitions.append((np.flatnonzero(~val_mask), np.flatnonzero(val_mask)))
    return partitions


def split_batteries(
    ids: Sequence[str],
    val_fraction: float = 0.2,
    test_fraction: float = 0.2,
    seed: int = 0
) -> Tuple[List[str], List[str], List[str]]:
    """
    把電池切成 train / val / test（非零比例時至少各一顆）

    Raises:
        DataError: 比例不合法或電池不夠分
    """
    if not (0.0 <= val_fraction < 1.0 and 0.0 <= test_fraction < 1.0 and val_fraction + test_fraction < 1.0):
        raise DataError(f"切分比例不合法: val={val_fraction} test={test_fraction}")
    batteries = sorted(set(ids))
    n = len(batteries)
    n_test = max(1, int(round(n * test_fraction))) if test_fraction > 0 else 0
    n_val = max(1, int(round(n * val_fraction))) if val_fraction > 0 else 0
    if n - n_test - n_val < 1:
        raise DataError(f"split_batteries: {n} 顆電池不足以切出 train/val/test")

    order = stream(seed, 'split').permutation(n)
    shuffled = [batteries[i] for i in order]
    test_ids = sorted(shuffled[:n_test])
    val_ids = sorted(shuffled[n_test:n_test + n_val])
    train_ids = sorted(shuffled[n_test + n_val:])
    return train_ids, val_ids, test_ids
