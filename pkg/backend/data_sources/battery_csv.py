"""
電池時間序列 CSV
Battery Time-series CSV

固定欄位（完全一致的表頭）：
    battery_id,cycle,step,voltage,current,charge_capacity,discharge_capacity,charge_energy,discharge_energy,rul

UTF-8、LF 換行、小數點為 '.'。每一列是一顆電池在某個 cycle 的某個 step 的量測值，
rul 為剩餘 cycles（非負，且在同一顆電池內隨時間不增）。
"""

from pathlib import Path
from typing import List, Union

import numpy as np
import pandas as pd

from backend.errors import DataError
from config.logging_setup import setup_logger

logger = setup_logger(__name__)

# 節點順序（n = 6）
PARAMETERS = [
    'voltage',
    'current',
    'charge_capacity',
    'discharge_capacity',
    'charge_energy',
    'discharge_energy',
]

KEY_COLUMNS = ['battery_id', 'cycle', 'step']
COLUMNS = KEY_COLUMNS + PARAMETERS + ['rul']


def _check_header(path: Path) -> None:
    with open(path, 'r', encoding='utf-8', newline='') as fh:
        first = fh.readline()
    if not first:
        raise DataError(f"{path}: 檔案是空的，缺少表頭")
    header = first.rstrip('\r\n').split(',')
    if header == COLUMNS:
        return

    missing = [c for c in COLUMNS if c not in header]
    unknown = [c for c in header if c not in COLUMNS]
    if missing or unknown:
        parts = []
        if missing:
            parts.append(f"缺少欄位 {missing}")
        if unknown:
            parts.append(f"未知欄位 {unknown}")
        raise DataError(f"{path}: 表頭不符（{'，'.join(parts)}）")
    raise DataError(f"{path}: 欄位順序必須為 {','.join(COLUMNS)}")


def _parse_numeric(raw: pd.Series, column: str, path: Path, allow_missing: bool) -> pd.Series:
    """字串欄轉成 float；錯誤訊息附上檔案行號（表頭為第 1 行）"""
    values = pd.to_numeric(raw, errors='coerce')
    empty = raw.str.strip() == ''
    bad = values.isna() & ~(empty & allow_missing)
    if bad.any():
        idx = int(np.flatnonzero(bad.to_numpy())[0])
        text = raw.iloc[idx]
        reason = "空白" if text.strip() == '' else f"非數值 {text!r}"
        raise DataError(f"{path}:{idx + 2}: 欄位 {column} {reason}")
    if np.isinf(values.to_numpy(dtype=np.float64)).any():
        idx = int(np.flatnonzero(np.isinf(values.to_numpy(dtype=np.float64)))[0])
        raise DataError(f"{path}:{idx + 2}: 欄位 {column} 不可為無限大")
    return values.astype(np.float64)


def _parse_integer(raw: pd.Series, column: str, path: Path, minimum: int) -> pd.Series:
    values = _parse_numeric(raw, column, path, allow_missing=False)
    arr = values.to_numpy()
    bad = (arr != np.floor(arr)) | (arr < minimum)
    if bad.any():
        idx = int(np.flatnonzero(bad)[0])
        raise DataError(f"{path}:{idx + 2}: 欄位 {column} 必須為 ≥ {minimum} 的整數，收到 {raw.iloc[idx]!r}")
    return values.astype(np.int64)


def load_csv(path: Union[str, Path], allow_missing: bool = False) -> pd.DataFrame:
    """
    讀取電池 CSV

    Args:
        path: CSV 路徑
        allow_missing: True 時參數欄允許空白（讀成 NaN，供缺值補值流程使用）

    Returns:
        依 (battery_id, cycle, step) 排序的 DataFrame，欄位同 COLUMNS

    Raises:
        DataError: 表頭不符、非數值、鍵重複、rul 為負或隨時間增加
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"找不到資料檔: {path}")
    _check_header(path)

    raw = pd.read_csv(path, dtype=str, keep_default_na=False, encoding='utf-8')
    if raw.empty:
        logger.info(f"📭 {path} 沒有資料列")
        return empty_frame()

    frame = pd.DataFrame({'battery_id': raw['battery_id'].astype(str)})
    if (frame['battery_id'].str.strip() == '').any():
        idx = int(np.flatnonzero((frame['battery_id'].str.strip() == '').to_numpy())[0])
        raise DataError(f"{path}:{idx + 2}: battery_id 不可為空白")
    frame['cycle'] = _parse_integer(raw['cycle'], 'cycle', path, minimum=1)
    frame['step'] = _parse_integer(raw['step'], 'step', path, minimum=0)
    for column in PARAMETERS:
        frame[column] = _parse_numeric(raw[column], column, path, allow_missing)
    frame['rul'] = _parse_numeric(raw['rul'], 'rul', path, allow_missing=False)

    negative = frame['rul'] < 0
    if negative.any():
        idx = int(np.flatnonzero(negative.to_numpy())[0])
        raise DataError(f"{path}:{idx + 2}: rul 不可為負")

    duplicated = frame.duplicated(subset=KEY_COLUMNS, keep='first')
    if duplicated.any():
        idx = int(np.flatnonzero(duplicated.to_numpy())[0])
        key = tuple(frame.loc[idx, KEY_COLUMNS])
        raise DataError(f"{path}:{idx + 2}: 重複的鍵 (battery_id, cycle, step) = {key}")

    frame = frame.sort_values(KEY_COLUMNS, kind='mergesort').reset_index(drop=True)
    _check_rul_monotone(frame, path)

    logger.info(f"✅ 讀取 {path.name}: {len(frame)} 列，{frame['battery_id'].nunique()} 顆電池")
    return frame


def _check_rul_monotone(frame: pd.DataFrame, path: Path) -> None:
    increase = frame.groupby('battery_id', sort=False)['rul'].diff() > 0
    if increase.any():
        idx = int(np.flatnonzero(increase.to_numpy())[0])
        row = frame.loc[idx]
        raise DataError(
            f"{path}: 電池 {row['battery_id']} 的 rul 在 cycle {row['cycle']} step {row['step']} 增加"
        )


def empty_frame() -> pd.DataFrame:
    frame = pd.DataFrame({c: pd.Series(dtype=np.float64) for c in COLUMNS})
    frame['battery_id'] = frame['battery_id'].astype(str)
    frame['cycle'] = frame['cycle'].astype(np.int64)
    frame['step'] = frame['step'].astype(np.int64)
    return frame


def write_csv(frame: pd.DataFrame, path: Union[str, Path]) -> Path:
    """依固定欄位順序寫出（LF 換行、不含 index）"""
    missing = [c for c in COLUMNS if c not in frame.columns]
    if missing:
        raise DataError(f"缺少欄位 {missing}，無法寫出")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame[COLUMNS].to_csv(path, index=False, lineterminator='\n', encoding='utf-8')
    return path


def battery_ids(frame: pd.DataFrame) -> List[str]:
    """依排序後首次出現的順序列出電池"""
    return list(pd.unique(frame['battery_id']))


def select_batteries(frame: pd.DataFrame, ids) -> pd.DataFrame:
    return frame[frame['battery_id'].isin(list(ids))].reset_index(drop=True)
