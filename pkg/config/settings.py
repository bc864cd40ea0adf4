"""
配置管理系統
Configuration Management System

行程層級設定：從環境變數（.env）讀取，實驗參數另見 backend/training/config.py
"""

import logging
import os
from pathlib import Path
from typing import Optional

from dotenv import load_dotenv

# 加載環境變數
load_dotenv()

_LOG_LEVELS = {'DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL'}


class Settings:
    """應用程式設定"""

    def __init__(self):
        # 項目根目錄
        self.project_root = Path(__file__).parent.parent

        # 隨機種子（--seed 未指定時的預設值）
        self.seed_raw = os.getenv('BGN_SEED', '0')

        # 日誌
        self.log_level = os.getenv('LOG_LEVEL', 'INFO').upper()
        self.log_file: Optional[str] = os.getenv('LOG_FILE') or None

        # 輸出與結果封存
        self.output_dir = os.getenv('BGN_OUTPUT_DIR', 'runs')
        self.runs_db_path: Optional[str] = os.getenv('BGN_RUNS_DB') or None

        # 平行度（grid / ensemble / ablate）
        self.jobs_raw = os.getenv('BGN_JOBS', '1')

    @property
    def seed(self) -> int:
        """BGN_SEED，格式錯誤時回退為 0"""
        try:
            return int(self.seed_raw)
        except ValueError:
            return 0

    @property
    def jobs(self) -> int:
        try:
            return max(1, int(self.jobs_raw))
        except ValueError:
            return 1

    @property
    def log_level_value(self) -> int:
        return getattr(logging, self.log_level, logging.INFO)

    def validate(self) -> tuple[bool, list[str]]:
        """驗證設定值是否合法"""
        errors = []

        try:
            int(self.seed_raw)
        except ValueError:
            errors.append(f"❌ BGN_SEED 不是整數: {self.seed_raw!r}")

        try:
            if int(self.jobs_raw) < 1:
                errors.append("⚠️  BGN_JOBS 小於 1，將使用 1")
        except ValueError:
            errors.append(f"⚠️  BGN_JOBS 不是整數: {self.jobs_raw!r}，將使用 1")

        if self.log_level not in _LOG_LEVELS:
            errors.append(f"⚠️  未知的 LOG_LEVEL: {self.log_level}，將使用 INFO")

        is_valid = len([e for e in errors if e.startswith("❌")]) == 0
        return is_valid, errors


# 全局設定實例
settings = Settings()


if __name__ == "__main__":
    print("=== BGN 配置檢查 ===")
    print()

    is_valid, errors = settings.validate()
    for error in errors:
        print(f"  {error}")

    print(f"  seed={settings.seed} jobs={settings.jobs} log_level={settings.log_level}")
    print(f"  output_dir={settings.output_dir} runs_db={settings.runs_db_path}")
    print("✅ 必要配置完整" if is_valid else "❌ 配置不完整，請檢查.env檔案")
