"""
圖表主題配色
Plot Theme Colors

深色 / 淺色兩套配色，給 matplotlib 的 RUL 曲線圖使用
"""

from typing import Dict


class Theme:
    """主題配色類"""

    # ========== 深色主題 ==========
    DARK = {
        # 背景
        'bg_primary': '#000000',        # 圖片背景
        'bg_card': '#111111',           # 座標區背景

        # 文字
        'text_primary': '#b8bcc4',
        'text_secondary': '#7a8088',

        # 數據色
        'data_truth': '#b8bcc4',        # 真實 RUL
        'data_pred': '#0088dd',         # 預測 RUL
        'data_band': '#0055cc',         # ±2σ 區間
        'data_warning': '#cc9900',

        # 格線與邊框
        'grid': '#222222',
        'border': '#333333',
    }

    # ========== 淺色主題 ==========
    LIGHT = {
        'bg_primary': '#ffffff',
        'bg_card': '#f5f7fa',

        'text_primary': '#1a202c',
        'text_secondary': '#4a5568',

        'data_truth': '#1a202c',
        'data_pred': '#0066ff',
        'data_band': '#0080ff',
        'data_warning': '#fa8c16',

        'grid': '#e2e8f0',
        'border': '#cbd5e0',
    }

    NAMES = ('dark', 'light')

    @staticmethod
    def get_theme(theme_name: str = 'light') -> Dict[str, str]:
        """
        獲取指定主題的配色

        Args:
            theme_name: 'dark' 或 'light'

        Returns:
            主題配色字典

        Raises:
            ValueError: 未知的主題名稱
        """
        name = theme_name.lower()
        if name not in Theme.NAMES:
            raise ValueError(f"未知的主題: {theme_name}（可用 {Theme.NAMES}）")
        return Theme.DARK if name == 'dark' else Theme.LIGHT

    @staticmethod
    def rc_params(theme_name: str = 'light') -> Dict[str, object]:
        """轉成 matplotlib rcParams"""
        colors = Theme.get_theme(theme_name)
        return {
            'figure.facecolor': colors['bg_primary'],
            'savefig.facecolor': colors['bg_primary'],
            'axes.facecolor': colors['bg_card'],
            'axes.edgecolor': colors['border'],
            'axes.labelcolor': colors['text_primary'],
            'axes.titlecolor': colors['text_primary'],
            'xtick.color': colors['text_secondary'],
            'ytick.color': colors['text_secondary'],
            'grid.color': colors['grid'],
            'text.color': colors['text_primary'],
            'legend.facecolor': colors['bg_card'],
            'legend.edgecolor': colors['border'],
        }
