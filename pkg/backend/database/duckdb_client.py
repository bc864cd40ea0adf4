"""
DuckDB 實驗結果封存
DuckDB Run Archive

每次訓練 / 實驗一列，重跑同一個 run_key 時先刪後插（冪等）
Idempotent delete-then-insert snapshot of finished runs
"""

import json
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

import duckdb
import pandas as pd

from backend.scoring.metrics import MetricsReport, flatten_report
from config.logging_setup import setup_logger
from config.settings import settings

logger = setup_logger(__name__)


class RunStore:
    """實驗結果資料庫"""

    def __init__(self, db_path: Optional[Union[str, Path]] = None):
        """
        Args:
            db_path: 資料庫檔案路徑，預設用 BGN_RUNS_DB；':memory:' 為記憶體資料庫
        """
        self.db_path = str(db_path or settings.runs_db_path or Path(settings.output_dir) / 'runs.duckdb')
        if self.db_path != ':memory:':
            Path(self.db_path).parent.mkdir(parents=True, exist_ok=True)
        self.conn = duckdb.connect(self.db_path)
        self._init_schema()

    def _init_schema(self):
        self.conn.execute("""
            CREATE TABLE IF NOT EXISTS runs (
                run_key VARCHAR PRIMARY KEY,
                kind VARCHAR NOT NULL,
                variant VARCHAR,
                ablation VARCHAR,
                seed INTEGER,
                config JSON,
                rmse DOUBLE,
                mae DOUBLE,
                created_at TIMESTAMP
            )
        """)
        self.conn.execute("""
            CREATE TABLE IF NOT EXISTS metric_rows (
                run_key VARCHAR NOT NULL,
                metric VARCHAR NOT NULL,
                value DOUBLE,
                PRIMARY KEY (run_key, metric)
            )
        """)
        logger.debug(f"RunStore 就緒: {self.db_path}")

    # ========== 寫入 ==========

    def upsert_run(
        self,
        run_key: str,
        kind: str,
        config: Mapping[str, Any],
        report: MetricsReport,
        seed: Optional[int] = None
    ):
        """
        插入或更新一次執行（冪等）

        Args:
            run_key: 執行識別，例如輸出目錄
            kind: train / ablate / grid / ensemble …
            config: TrainConfig.to_dict()
            report: 主要指標（有 test 時為 test）
        """
        seed = config.get('seed') if seed is None else seed

        self.conn.execute("DELETE FROM metric_rows WHERE run_key = ?", [run_key])
        self.conn.execute("DELETE FROM runs WHERE run_key = ?", [run_key])

        self.conn.execute(
            "INSERT INTO runs VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?)",
            [
                run_key,
                kind,
                config.get('variant'),
                config.get('ablation'),
                seed,
                json.dumps(dict(config), sort_keys=True),
                report.rmse,
                report.mae,
                datetime.now(),
            ],
        )
        metrics = pd.DataFrame(
            [(run_key, metric, float(value)) for metric, value in flatten_report(report).items()],
            columns=['run_key', 'metric', 'value'],
        )
        self.conn.execute("INSERT INTO metric_rows SELECT * FROM metrics")
        logger.info(f"🗄️  已封存 {run_key}（{kind}）")

    # ========== 查詢 ==========

    def get_runs(self, kind: Optional[str] = None) -> pd.DataFrame:
        """依 run_key 排序的執行列表"""
        if kind:
            return self.conn.execute(
                "SELECT * FROM runs WHERE kind = ? ORDER BY run_key", [kind]
            ).df()
        return self.conn.execute("SELECT * FROM runs ORDER BY run_key").df()

    def get_metrics(self, run_key: str) -> Dict[str, float]:
        rows = self.conn.execute(
            "SELECT metric, value FROM metric_rows WHERE run_key = ? ORDER BY metric", [run_key]
        ).fetchall()
        return {metric: value for metric, value in rows}

    def close(self):
        self.conn.close()

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.close()


if __name__ == "__main__":
    demo = MetricsReport.compute([0.5, 0.4], [0.5, 0.45], denorm=100.0)
    with RunStore(':memory:') as store:
        store.upsert_run('demo', 'train', {'variant': 'bgn', 'ablation': 'none', 'seed': 0}, demo)
        store.upsert_run('demo', 'train', {'variant': 'bgn', 'ablation': 'none', 'seed': 0}, demo)
        print(store.get_runs())
        print(store.get_metrics('demo'))
