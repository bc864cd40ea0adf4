"""
bgn 命令列的端對端測試
"""

import json
import logging
import xml.etree.ElementTree as ET

import pandas as pd
import pytest

from config.settings import settings
from frontend.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, build_parser, load_config, main

TINY = [
    '--set', 'embedding_dim=8', '--set', 'hidden_dim=8', '--set', 'window=16', '--set', 'stride=8',
    '--set', 'seq_len=3', '--set', 'batch_size=16', '--set', 'max_epochs=1',
    '--set', 'val_fraction=0.25', '--set', 'test_fraction=0.25',
]


@pytest.fixture(scope='module')
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp('cli')
    data = root / 'synth.csv'
    assert main(['synth-data', '--out', str(data), '--batteries', '4', '--steps', '400', '--seed', '0']) == EXIT_OK
    assert main(['train', '--data', str(data), '--out', str(root / 'run'), '--seed', '0', *TINY]) == EXIT_OK
    return root


# ========== 結束碼 ==========

def test_help_exits_zero():
    assert main(['--help']) == EXIT_OK


def test_unknown_verb():
    assert main(['bogus']) == EXIT_USAGE


def test_missing_data_flag():
    assert main(['train']) == EXIT_USAGE


def test_bad_override(workspace):
    assert main(['train', '--data', str(workspace / 'synth.csv'), '--set', 'lr=abc']) == EXIT_USAGE
    assert main(['train', '--data', str(workspace / 'synth.csv'), '--set', 'depth=3']) == EXIT_USAGE


def test_bad_jobs(workspace):
    assert main(['ablate', '--data', str(workspace / 'synth.csv'), '--jobs', '0']) == EXIT_USAGE


def test_malformed_csv(tmp_path):
    bad = tmp_path / 'bad.csv'
    bad.write_text('battery_id,cycle\nB1,1\n', encoding='utf-8')
    assert main(['train', '--data', str(bad), '--out', str(tmp_path / 'run')]) == EXIT_DATA


def test_missing_checkpoint(workspace, tmp_path):
    assert main(['eval', '--run', str(tmp_path / 'nothing'), '--data', str(workspace / 'synth.csv')]) == EXIT_DATA


# ========== 流程 ==========

def test_train_writes_run_directory(workspace):
    run = workspace / 'run'
    metrics = json.loads((run / 'metrics.json').read_text(encoding='utf-8'))
    assert metrics['epochs_run'] == 1
    assert metrics['test'] is not None
    config = json.loads((run / 'config.json').read_text(encoding='utf-8'))
    assert config['embedding_dim'] == 8


def test_rerun_is_byte_identical(workspace, tmp_path):
    out = tmp_path / 'again'
    assert main(['train', '--data', str(workspace / 'synth.csv'), '--out', str(out), '--seed', '0', *TINY]) == EXIT_OK
    for name in ('metrics.json', 'checkpoint.bgn', 'predictions.csv'):
        assert (out / name).read_bytes() == (workspace / 'run' / name).read_bytes(), name


def test_eval_and_predict(workspace):
    run, data = workspace / 'run', workspace / 'synth.csv'
    assert main(['eval', '--run', str(run), '--data', str(data)]) == EXIT_OK
    report = json.loads((run / 'eval_metrics.json').read_text(encoding='utf-8'))
    assert report['n'] == 4 * 47
    assert (run / 'eval_metrics_predictions.csv').exists()

    out = workspace / 'predictions_all.csv'
    assert main(['predict', '--run', str(run), '--data', str(data), '--out', str(out)]) == EXIT_OK
    predictions = pd.read_csv(out)
    assert list(predictions.columns[:4]) == ['battery_id', 'end_index', 'y_true', 'y_pred']
    assert len(predictions) == 4 * 47


def test_export_graph(workspace):
    out = workspace / 'graph.csv'
    assert main(['export-graph', '--run', str(workspace / 'run'), '--data', str(workspace / 'synth.csv'),
                 '--out', str(out)]) == EXIT_OK
    edges = pd.read_csv(out)
    assert list(edges.columns) == ['battery_id', 'end_index', 't', 'i', 'j', 'weight', 'hard']
    assert (edges['i'] != edges['j']).all()
    assert len(edges) == 4 * 47 * 3 * 30
    assert edges['weight'].between(0, 1).all()
    assert set(edges['hard'].unique()) <= {0, 1}


def test_plot_writes_svg(workspace):
    out = workspace / 'pred.svg'
    assert main(['plot', '--data', str(workspace / 'run' / 'predictions.csv'), '--out', str(out),
                 '--theme', 'dark']) == EXIT_OK
    assert ET.parse(out).getroot().tag.endswith('svg')


def test_plot_missing_file(tmp_path):
    assert main(['plot', '--data', str(tmp_path / 'none.csv'), '--out', str(tmp_path / 'x.svg')]) == EXIT_DATA


def test_kfold_train(workspace, tmp_path):
    out = tmp_path / 'kfold'
    assert main(['train', '--data', str(workspace / 'synth.csv'), '--out', str(out), '--folds', '2', *TINY]) == EXIT_OK
    summary = json.loads((out / 'kfold.json').read_text(encoding='utf-8'))
    assert summary['k'] == 2
    assert (out / 'fold_1' / 'checkpoint.bgn').exists()


def test_train_archives_to_duckdb(workspace, tmp_path):
    from backend.database.duckdb_client import RunStore

    db = tmp_path / 'runs.duckdb'
    out = tmp_path / 'run'
    assert main(['train', '--data', str(workspace / 'synth.csv'), '--out', str(out), '--db', str(db), *TINY]) == EXIT_OK
    with RunStore(db) as store:
        assert list(store.get_runs('train')['run_key']) == [str(out)]


def test_impute_wgan(workspace, tmp_path):
    out = tmp_path / 'imputed.csv'
    assert main(['impute-wgan', '--data', str(workspace / 'synth.csv'), '--out', str(out), '--mask-rate', '0.2',
                 *TINY, '--set', 'gen_epochs=1']) == EXIT_OK
    imputed = pd.read_csv(out)
    mask = pd.read_csv(out.with_suffix('.mask.csv'))
    assert imputed.notna().all().all()
    assert len(mask) == len(imputed)
    assert 0.1 < 1 - mask['voltage'].mean() < 0.3


def test_augment_vae(workspace, tmp_path):
    out = tmp_path / 'synthetic.csv'
    assert main(['augment-vae', '--data', str(workspace / 'synth.csv'), '--out', str(out), *TINY,
                 '--set', 'gen_epochs=1', '--set', 'n_generated=3', '--set', 'latent_dim=4']) == EXIT_OK
    generated = pd.read_csv(out)
    assert generated['battery_id'].nunique() == 3
    assert generated['battery_id'].str.startswith('synthetic-').all()


# ========== 種子來源 ==========

@pytest.fixture
def seeded_config(tmp_path, monkeypatch):
    monkeypatch.setattr(settings, 'seed_raw', '7')
    path = tmp_path / 'config.json'
    path.write_text(json.dumps({'seed': 3, 'max_epochs': 2}), encoding='utf-8')
    return path


def test_environment_seed_without_config_file(seeded_config):
    assert load_config(build_parser().parse_args(['train'])).seed == 7


def test_config_file_seed_wins_over_environment(seeded_config, caplog, monkeypatch):
    monkeypatch.setattr(logging.getLogger('bgn'), 'propagate', True)
    with caplog.at_level(logging.INFO, logger='bgn'):
        config = load_config(build_parser().parse_args(['train', '--config', str(seeded_config)]))
    assert config.seed == 3
    assert 'BGN_SEED=7' in caplog.text


def test_seed_flag_wins_over_config_file(seeded_config, caplog, monkeypatch):
    monkeypatch.setattr(logging.getLogger('bgn'), 'propagate', True)
    with caplog.at_level(logging.INFO, logger='bgn'):
        config = load_config(build_parser().parse_args(
            ['train', '--config', str(seeded_config), '--seed', '11', '--set', 'seed=5']))
    assert config.seed == 11
    assert 'BGN_SEED' not in caplog.text
