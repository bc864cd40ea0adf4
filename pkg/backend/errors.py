"""
錯誤類別
Error Hierarchy

每個錯誤同時繼承對應的內建例外，呼叫端用 ValueError / RuntimeError 捕捉仍然有效。
CLI 依類別決定結束碼（見 frontend/cli.py）。
"""


class BgnError(Exception):
    """所有 BGN 錯誤的基類"""


class ShapeError(BgnError, ValueError):
    """張量維度不一致"""


class NonFiniteError(BgnError, FloatingPointError):
    """前向運算或梯度出現 NaN / Inf"""


class ConfigError(BgnError, ValueError):
    """設定鍵不存在或數值不合法"""


class DataError(BgnError, ValueError):
    """CSV 結構、解析、正規化、切窗或資料切分錯誤"""


class CheckpointError(BgnError, ValueError):
    """檢查點檔案損毀或格式不符"""


class TrainingError(BgnError, RuntimeError):
    """訓練發散（附 epoch / batch 資訊）"""


class UsageError(BgnError):
    """命令列用法錯誤"""
