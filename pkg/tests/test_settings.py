"""
環境變數設定與日誌
"""

import logging

from config.logging_setup import set_level, setup_logger
from config.settings import Settings


def test_defaults(monkeypatch):
    for name in ('BGN_SEED', 'LOG_LEVEL', 'LOG_FILE', 'BGN_OUTPUT_DIR', 'BGN_RUNS_DB', 'BGN_JOBS'):
        monkeypatch.delenv(name, raising=False)
    settings = Settings()
    assert settings.seed == 0
    assert settings.jobs == 1
    assert settings.log_level == 'INFO'
    assert settings.log_file is None
    assert settings.output_dir == 'runs'
    assert settings.runs_db_path is None
    assert settings.validate() == (True, [])


def test_environment_overrides(monkeypatch):
    monkeypatch.setenv('BGN_SEED', '42')
    monkeypatch.setenv('BGN_JOBS', '4')
    monkeypatch.setenv('LOG_LEVEL', 'debug')
    monkeypatch.setenv('BGN_RUNS_DB', 'runs/archive.duckdb')
    settings = Settings()
    assert settings.seed == 42
    assert settings.jobs == 4
    assert settings.log_level_value == logging.DEBUG
    assert settings.runs_db_path == 'runs/archive.duckdb'


def test_invalid_seed_is_an_error(monkeypatch):
    monkeypatch.setenv('BGN_SEED', 'abc')
    settings = Settings()
    assert settings.seed == 0
    is_valid, errors = settings.validate()
    assert not is_valid
    assert errors[0].startswith('❌')


def test_bad_jobs_is_only_a_warning(monkeypatch):
    monkeypatch.setenv('BGN_SEED', '1')
    monkeypatch.setenv('BGN_JOBS', '0')
    settings = Settings()
    assert settings.jobs == 1
    is_valid, errors = settings.validate()
    assert is_valid
    assert len(errors) == 1


def test_logger_namespace():
    logger = setup_logger('x')
    assert logger.name == 'bgn.x'
    set_level('warning')
    assert logging.getLogger('bgn').level == logging.WARNING
    set_level('info')
