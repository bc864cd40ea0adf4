"""
日誌設定
Logging Setup

所有診斷訊息寫到 stderr；機器輸出只寫檔案。
"""

import logging
import sys
from pathlib import Path

from config.settings import settings

_FORMAT = '%(asctime)s %(levelname)-7s %(name)s | %(message)s'
_configured = False


def _configure_root() -> None:
    global _configured
    if _configured:
        return

    root = logging.getLogger('bgn')
    root.setLevel(settings.log_level_value)
    root.propagate = False

    stream = logging.StreamHandler(sys.stderr)
    stream.setFormatter(logging.Formatter(_FORMAT))
    root.addHandler(stream)

    if settings.log_file:
        Path(settings.log_file).parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(settings.log_file, encoding='utf-8')
        file_handler.setFormatter(logging.Formatter(_FORMAT))
        root.addHandler(file_handler)

    _configured = True


def setup_logger(name: str) -> logging.Logger:
    """
    取得模組 logger（掛在 'bgn' 命名空間下）

    Args:
        name: 通常傳入 __name__

    Returns:
        logging.Logger
    """
    _configure_root()
    return logging.getLogger(f'bgn.{name}')


def set_level(level: str) -> None:
    """CLI --verbose / --quiet 使用"""
    _configure_root()
    logging.getLogger('bgn').setLevel(getattr(logging, level.upper(), logging.INFO))
