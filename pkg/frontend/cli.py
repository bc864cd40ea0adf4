"""
BGN 命令列
BGN Command-line Interface

    bgn synth-data   --out data.csv [--batteries 8 --steps 2000 --noise 0.01]
    bgn train        --data data.csv --out runs/bgn [--folds k]
    bgn eval         --run runs/bgn --data data.csv [--out metrics.json]
    bgn predict      --run runs/bgn --data data.csv --out predictions.csv
    bgn ablate       --data data.csv --out runs/ablation [--jobs N]
    bgn grid         --data data.csv --out runs/grid [--grid grid.json] [--jobs N]
    bgn ensemble     --data data.csv --out runs/ensemble [--jobs N]
    bgn export-graph --run runs/bgn --data data.csv --out graph.csv
    bgn augment-vae  --data data.csv --out synthetic.csv [--table runs/augment]
    bgn impute-wgan  --data data.csv --out imputed.csv --mask-rate 0.2 [--table runs/impute]
    bgn plot         --data predictions.csv --out predictions.svg [--theme light|dark]

共用旗標：--config、--set key=value（可重複）、--seed（預設 BGN_SEED）、--db（預設 BGN_RUNS_DB）。
診斷訊息只寫 stderr，結果只寫檔案。

結束碼：0 成功；1 用法 / 設定錯誤；2 資料 / 檢查點錯誤；3 訓練失敗。
"""

import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np
import pandas as pd

from backend.autodiff.tensor import no_grad
from backend.data_sources.battery_csv import PARAMETERS, load_csv, write_csv
from backend.data_sources.synthetic import synth_degradation
from backend.database.duckdb_client import RunStore
from backend.errors import (
    CheckpointError,
    ConfigError,
    DataError,
    NonFiniteError,
    TrainingError,
    UsageError,
)
from backend.etl.windowing import fit_normalization, make_windows, stack_samples
from backend.genmod.imputation import frame_windows, impute_frame, mask_frame, train_imputer
from backend.genmod.retrain import retrain_with_generated
from backend.genmod.vae import generated_frame, train_vae, vae_generate
from backend.graph.dgi import harden
from backend.scoring.metrics import flatten_report
from backend.training.config import TrainConfig
from backend.training.experiments import (
    ensemble_seeds,
    render_table,
    run_ablation_suite,
    run_ensemble,
    run_grid,
    run_kfold,
)
from backend.training.run_io import load_run, write_frame, write_json, write_run
from backend.training.trainer import evaluate, prepare_splits, train_splits
from config.logging_setup import set_level, setup_logger
from config.settings import settings
from frontend.plots import plot_predictions

logger = setup_logger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_TRAINING = 3


class BgnArgumentParser(argparse.ArgumentParser):
    """用法錯誤改成拋出 UsageError（結束碼 1），說明文字寫到 stderr"""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


# ========== 共用 ==========

def load_config(args) -> TrainConfig:
    """
    種子優先順序：--seed > --set seed=… > 設定檔 > BGN_SEED
    """
    config = TrainConfig.from_json(args.config) if args.config else TrainConfig(seed=settings.seed)
    config = config.with_overrides(args.set)
    if args.seed is not None:
        config = config.evolve(seed=args.seed)
    elif args.config and config.seed != settings.seed:
        logger.info(f"ℹ️  使用 seed={config.seed}（來自 {args.config} / --set），忽略 BGN_SEED={settings.seed}")
    return config


def require(args, *names: str) -> None:
    for name in names:
        if getattr(args, name, None) is None:
            raise UsageError(f"{args.verb} 需要 --{name.replace('_', '-')}")


def open_store(args) -> Optional[RunStore]:
    path = args.db or settings.runs_db_path
    return RunStore(path) if path else None


def write_table(out_dir: Path, name: str, table: pd.DataFrame) -> None:
    write_frame(out_dir / f'{name}.csv', table)
    (out_dir / f'{name}.txt').write_text(render_table(table), encoding='utf-8')


# ========== 指令 ==========

def cmd_synth_data(args) -> int:
    require(args, 'out')
    seed = args.seed if args.seed is not None else settings.seed
    frame = synth_degradation(args.batteries, args.steps, noise=args.noise, seed=seed)
    write_csv(frame, args.out)
    logger.info(f"✅ 合成資料寫入 {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    require(args, 'data')
    config = load_config(args)
    frame = load_csv(args.data)
    out = Path(args.out or settings.output_dir)

    if args.folds is not None:
        result = run_kfold(config, frame, k=args.folds, jobs=args.jobs or settings.jobs)
        for i, fold in enumerate(result.folds):
            write_run(out / f'fold_{i}', fold)
        write_frame(out / 'kfold.csv', result.table())
        write_json(out / 'kfold.json', {
            'k': len(result.folds),
            'val_rmse_mean': result.val_rmse_mean,
            'val_rmse_std': result.val_rmse_std,
        })
        return EXIT_OK

    result = train_splits(config, prepare_splits(frame, config))
    write_run(out, result)
    store = open_store(args)
    if store is not None:
        with store:
            store.upsert_run(str(out), 'train', config.to_dict(), result.headline(), seed=result.seed)
    return EXIT_OK


def _windows_for_run(args):
    require(args, 'run', 'data')
    run = load_run(args.run, args.checkpoint)
    frame = load_csv(args.data)
    samples = make_windows(frame, run.config.window, run.config.stride, run.config.seq_len, run.stats)
    if not samples:
        raise DataError(f"{args.data} 切不出任何樣本")
    return run, stack_samples(samples)


def cmd_eval(args) -> int:
    run, samples = _windows_for_run(args)
    report, predictions = evaluate(run.model, samples, run.stats)
    out = Path(args.out) if args.out else Path(args.run) / 'eval_metrics.json'
    write_json(out, report.to_dict())
    write_frame(out.with_name(out.stem + '_predictions.csv'), predictions)
    logger.info(f"📊 RMSE={report.rmse:.4f} MAE={report.mae:.4f}（{report.n_samples} 個樣本）")
    return EXIT_OK


def cmd_predict(args) -> int:
    require(args, 'out')
    run, samples = _windows_for_run(args)
    _, predictions = evaluate(run.model, samples, run.stats)
    write_frame(args.out, predictions)
    logger.info(f"✅ {len(predictions)} 筆預測寫入 {args.out}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    require(args, 'data')
    config = load_config(args)
    table = run_ablation_suite(config, load_csv(args.data), seeds=ensemble_seeds(config),
                               jobs=args.jobs or settings.jobs)
    write_table(Path(args.out or settings.output_dir), 'ablation', table)
    return EXIT_OK


def cmd_grid(args) -> int:
    require(args, 'data')
    config = load_config(args)
    grid = None
    if args.grid:
        try:
            grid = json.loads(Path(args.grid).read_text(encoding='utf-8'))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"無法讀取網格設定 {args.grid}: {exc}") from exc
    table = run_grid(config, load_csv(args.data), grid=grid, jobs=args.jobs or settings.jobs)
    write_table(Path(args.out or settings.output_dir), 'grid', table)
    return EXIT_OK


def cmd_ensemble(args) -> int:
    require(args, 'data')
    config = load_config(args)
    result = run_ensemble(config, load_csv(args.data), jobs=args.jobs or settings.jobs)
    out = Path(args.out or settings.output_dir)
    write_json(out / 'ensemble.json', {
        'val': result.val.to_dict(),
        'test': result.test.to_dict() if result.test is not None else None,
        'seeds': [r.seed for r in result.runs],
    })
    rows = [{'seed': r.seed, **flatten_report(r.headline())} for r in result.runs]
    write_frame(out / 'ensemble.csv', pd.DataFrame(rows))

    store = open_store(args)
    if store is not None:
        with store:
            for r in result.runs:
                store.upsert_run(f'{out}#seed={r.seed}', 'ensemble', config.to_dict(), r.headline(), seed=r.seed)
    headline = result.headline()
    logger.info(f"📊 ensemble RMSE {headline.cell('rmse')}，MAE {headline.cell('mae')}")
    return EXIT_OK


def cmd_export_graph(args) -> int:
    require(args, 'out')
    run, samples = _windows_for_run(args)
    if run.config.ablation == 'no_gnn':
        raise UsageError("w/o GNN 消融沒有圖可匯出")

    n = len(PARAMETERS)
    rows = []
    with no_grad():
        for start in range(0, len(samples), 256):
            batch = samples.subset(np.arange(start, min(start + 256, len(samples))))
            adjacency = run.model.backbone.encode(batch.features, training=False).adjacency.data
            windows = batch.features.shape[1] if run.config.temporal_mode == 'window_sequence' else 1
            adjacency = np.broadcast_to(adjacency, (len(batch), windows, n, n))
            hard = harden(adjacency)
            for b in range(len(batch)):
                for t in range(windows):
                    for i in range(n):
                        for j in range(n):
                            if i != j:
                                rows.append((batch.battery_ids[b], int(batch.end_indices[b]), t, i, j,
                                             float(adjacency[b, t, i, j]), int(hard[b, t, i, j])))
    frame = pd.DataFrame(rows, columns=['battery_id', 'end_index', 't', 'i', 'j', 'weight', 'hard'])
    write_frame(args.out, frame)
    logger.info(f"🕸️  {len(frame)} 條邊寫入 {args.out}")
    return EXIT_OK


def cmd_augment_vae(args) -> int:
    require(args, 'data', 'out')
    config = load_config(args)
    frame = load_csv(args.data)
    splits = prepare_splits(frame, config)
    vae, _ = train_vae(splits.train, config)
    batch = vae_generate(vae, config.n_generated, seed=config.seed)
    write_csv(generated_frame(batch, splits.stats), args.out)
    logger.info(f"🧬 {len(batch)} 個合成樣本寫入 {args.out}")

    if args.table:
        table = retrain_with_generated(config, frame, 'augment', seeds=ensemble_seeds(config),
                                       jobs=args.jobs or settings.jobs)
        write_table(Path(args.table), 'augment', table)
    return EXIT_OK


def cmd_impute_wgan(args) -> int:
    require(args, 'data', 'out')
    config = load_config(args)
    if args.mask_rate is not None:
        config = config.evolve(mask_rate=args.mask_rate)
    frame = load_csv(args.data, allow_missing=True)
    if not frame[PARAMETERS].isna().to_numpy().any():
        frame = mask_frame(frame, config.mask_rate, config.seed)

    stats = fit_normalization(frame)
    x, m, _ = frame_windows(frame, stats, config.window)
    imputer, _ = train_imputer(x, m, config)
    imputed, mask = impute_frame(frame, imputer, stats, config.window, seed=config.seed)

    out = Path(args.out)
    write_csv(imputed, out)
    write_frame(out.with_suffix('.mask.csv'), mask)

    if args.table:
        clean = load_csv(args.data)
        table = retrain_with_generated(config, clean, 'impute', seeds=ensemble_seeds(config),
                                       jobs=args.jobs or settings.jobs)
        write_table(Path(args.table), 'impute', table)
    return EXIT_OK


def cmd_plot(args) -> int:
    require(args, 'data', 'out')
    plot_predictions(args.data, args.out, theme=args.theme)
    return EXIT_OK


COMMANDS = {
    'synth-data': cmd_synth_data,
    'train': cmd_train,
    'eval': cmd_eval,
    'predict': cmd_predict,
    'ablate': cmd_ablate,
    'grid': cmd_grid,
    'ensemble': cmd_ensemble,
    'export-graph': cmd_export_graph,
    'augment-vae': cmd_augment_vae,
    'impute-wgan': cmd_impute_wgan,
    'plot': cmd_plot,
}


# ========== 進入點 ==========

def build_parser() -> BgnArgumentParser:
    parser = BgnArgumentParser(
        prog='bgn',
        description='BGN：電池參數動態圖 + RUL 預測',
    )
    parser.add_argument('verb', choices=sorted(COMMANDS), help='要執行的工作')
    parser.add_argument('--data', help='輸入 CSV（plot 時為 predictions.csv）')
    parser.add_argument('--config', help='扁平 JSON 設定檔')
    parser.add_argument('--out', help='輸出檔案或目錄')
    parser.add_argument('--seed', type=int, help='隨機種子（預設 BGN_SEED）')
    parser.add_argument('--jobs', type=int, help='平行行程數（grid / ensemble / ablate）')
    parser.add_argument('--set', action='append', default=[], metavar='KEY=VALUE', help='覆寫設定（可重複）')
    parser.add_argument('--run', help='訓練輸出目錄（eval / predict / export-graph）')
    parser.add_argument('--checkpoint', help='指定檢查點檔（預設 <run>/checkpoint.bgn）')
    parser.add_argument('--db', help='DuckDB 結果封存（預設 BGN_RUNS_DB）')
    parser.add_argument('--folds', type=int, help='train：k 折交叉驗證')
    parser.add_argument('--grid', help='grid：{key: [values]} 的 JSON 檔')
    parser.add_argument('--table', help='augment-vae / impute-wgan：另跑 BGN vs BGN* 比較並寫到此目錄')
    parser.add_argument('--mask-rate', type=float, help='impute-wgan：遮蔽比例')
    parser.add_argument('--batteries', type=int, default=8, help='synth-data：電池數')
    parser.add_argument('--steps', type=int, default=2000, help='synth-data：每顆電池步數')
    parser.add_argument('--noise', type=float, default=0.01, help='synth-data：相對雜訊')
    parser.add_argument('--theme', default='light', choices=['light', 'dark'], help='plot：配色')
    parser.add_argument('--verbose', action='store_true', help='DEBUG 等級日誌')
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"bgn: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        # --help
        return int(exc.code or 0)

    if args.verbose:
        set_level('DEBUG')
    if args.jobs is not None and args.jobs < 1:
        print("bgn: error: --jobs 必須 ≥ 1", file=sys.stderr)
        return EXIT_USAGE

    try:
        return COMMANDS[args.verb](args)
    except (UsageError, ConfigError) as exc:
        logger.error(f"❌ {exc}")
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except (DataError, CheckpointError) as exc:
        logger.error(f"❌ 資料錯誤: {exc}")
        return EXIT_DATA
    except (TrainingError, NonFiniteError) as exc:
        logger.error(f"❌ 訓練失敗: {exc}")
        return EXIT_TRAINING


if __name__ == "__main__":
    sys.exit(main())
