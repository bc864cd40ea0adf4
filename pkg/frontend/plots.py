"""
RUL 預測圖
RUL Prediction Plots

predictions.csv → 自含的 SVG：每顆電池一個子圖，y_true 與 y_pred 對樣本序號；
有 var 欄（BGN-UE）時加上 ±2σ 陰影區間。
"""

from pathlib import Path
from typing import Union

import matplotlib

matplotlib.use('svg')

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from backend.errors import DataError  # noqa: E402
from config.logging_setup import setup_logger  # noqa: E402
from frontend.theme import Theme  # noqa: E402

logger = setup_logger(__name__)

PREDICTION_COLUMNS = ['battery_id', 'end_index', 'y_true', 'y_pred']
# 固定 SVG 內的 id，重跑輸出逐位元相同
SVG_HASH_SALT = 'bgn'


def load_predictions(path: Union[str, Path]) -> pd.DataFrame:
    """
    Raises:
        DataError: 檔案不存在、無法解析或缺欄位
    """
    path = Path(path)
    try:
        frame = pd.read_csv(path, dtype={'battery_id': str})
    except FileNotFoundError as exc:
        raise DataError(f"找不到預測檔: {path}") from exc
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise DataError(f"{path}: 預測檔格式錯誤: {exc}") from exc

    missing = [c for c in PREDICTION_COLUMNS if c not in frame.columns]
    if missing:
        raise DataError(f"{path}: 缺少欄位 {missing}")
    numeric = PREDICTION_COLUMNS[1:] + (['var'] if 'var' in frame.columns else [])
    for column in numeric:
        values = pd.to_numeric(frame[column], errors='coerce')
        if values.isna().any():
            line = int(values.isna().to_numpy().argmax()) + 2
            raise DataError(f"{path}: 第 {line} 行的 {column} 不是數值")
        frame[column] = values
    if 'var' in frame.columns and (frame['var'] < 0).any():
        raise DataError(f"{path}: var 不可為負")
    return frame


def plot_predictions(
    predictions: Union[str, Path, pd.DataFrame],
    out: Union[str, Path],
    theme: str = 'light',
    title: str = 'RUL prediction'
) -> Path:
    """
    繪製並寫出 SVG

    Returns:
        輸出路徑
    """
    frame = predictions if isinstance(predictions, pd.DataFrame) else load_predictions(predictions)
    if frame.empty:
        raise DataError("預測檔沒有任何資料列")
    colors = Theme.get_theme(theme)
    batteries = sorted(frame['battery_id'].astype(str).unique())
    has_band = 'var' in frame.columns

    rc = {**Theme.rc_params(theme), 'svg.hashsalt': SVG_HASH_SALT, 'svg.fonttype': 'path'}
    with plt.rc_context(rc):
        fig, axes = plt.subplots(len(batteries), 1, figsize=(8, 2.6 * len(batteries)), squeeze=False)
        for ax, battery_id in zip(axes[:, 0], batteries):
            group = frame[frame['battery_id'].astype(str) == battery_id].sort_values('end_index', kind='mergesort')
            index = np.arange(len(group))
            y_pred = group['y_pred'].to_numpy()
            if has_band:
                sigma = np.sqrt(group['var'].to_numpy())
                ax.fill_between(index, y_pred - 2 * sigma, y_pred + 2 * sigma,
                                color=colors['data_band'], alpha=0.25, linewidth=0, label='±2σ')
            ax.plot(index, group['y_true'].to_numpy(), color=colors['data_truth'], linewidth=1.4, label='y_true')
            ax.plot(index, y_pred, color=colors['data_pred'], linewidth=1.4, label='y_pred')
            ax.set_title(f"{title} · {battery_id}")
            ax.set_xlabel('sample')
            ax.set_ylabel('RUL (cycles)')
            ax.grid(True, linewidth=0.5)
            ax.legend(loc='upper right', fontsize='small')
        fig.tight_layout()

        out = Path(out)
        out.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(out, format='svg', metadata={'Date': None})
        plt.close(fig)

    logger.info(f"📈 圖表寫入 {out}（{len(batteries)} 顆電池）")
    return out
