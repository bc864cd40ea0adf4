"""
評估指標與多次執行彙整
"""

import numpy as np
import pytest

from backend.errors import ShapeError
from backend.scoring.metrics import (
    APPROX_THRESHOLDS,
    EnsembleReport,
    MetricsReport,
    approximation_error_table,
    flatten_report,
    format_mean_std,
    mae,
    rmse,
    summarize,
)


def test_rmse_and_mae_values():
    assert rmse([1, 2, 3], [1, 2, 5]) == pytest.approx(np.sqrt(4 / 3))
    assert mae([1, 2, 3], [1, 2, 5]) == pytest.approx(2 / 3)


def test_denormalization_scales_errors():
    assert rmse([0.1], [0.2], denorm=100.0) == pytest.approx(10.0)
    assert mae([0.1, 0.3], [0.2, 0.3], denorm=50.0) == pytest.approx(2.5)


def test_approximation_table_is_strict():
    pred = np.array([0.0, 0.0, 0.0, 0.0])
    target = np.array([0.5, 1.0, 2.5, 15.0])
    table = approximation_error_table(pred, target)
    assert list(table) == list(APPROX_THRESHOLDS)
    assert table[1] == 25.0          # 誤差剛好 1 不算
    assert table[2] == 50.0
    assert table[3] == 75.0
    assert table[10] == 75.0
    assert table[20] == 100.0


def test_approximation_table_validation():
    with pytest.raises(ValueError):
        approximation_error_table([1.0], [1.0], thresholds=(3, 1))
    with pytest.raises(ShapeError):
        approximation_error_table([], [])
    with pytest.raises(ShapeError):
        rmse([1.0, 2.0], [1.0])


def test_report_dict_round_trip():
    report = MetricsReport.compute([0.5, 0.4, 0.1], [0.5, 0.45, 0.3], denorm=100.0)
    data = report.to_dict()
    assert data['n'] == 3
    assert set(data['approx_error']) == {'1', '2', '3', '10', '20', '40'}
    assert MetricsReport.from_dict(data) == report


def test_flatten_report_keys():
    row = flatten_report(MetricsReport.compute([1.0], [1.0]))
    assert list(row) == ['rmse', 'mae', 'approx_1', 'approx_2', 'approx_3', 'approx_10', 'approx_20', 'approx_40']


def test_ensemble_uses_population_std():
    reports = [MetricsReport.compute([1.0], [0.0]), MetricsReport.compute([3.0], [0.0])]
    ensemble = EnsembleReport.aggregate(reports)
    assert ensemble.mean['rmse'] == pytest.approx(2.0)
    assert ensemble.std['rmse'] == pytest.approx(1.0)
    assert ensemble.cell('rmse') == '2.000 ± 1.000'
    assert len(ensemble.to_dict()['runs']) == 2


def test_identical_runs_have_zero_std():
    report = MetricsReport.compute([0.2, 0.4], [0.1, 0.5], denorm=10.0)
    ensemble = EnsembleReport.aggregate([report, report, report])
    assert all(v == pytest.approx(0.0, abs=1e-12) for v in ensemble.std.values())


def test_helpers():
    assert format_mean_std(1.23456, 0.1) == '1.235 ± 0.100'
    assert summarize([]) is None
    assert summarize([1.0, 3.0]) == {'mean': 2.0, 'std': 1.0}
    with pytest.raises(ValueError):
        EnsembleReport.aggregate([])
