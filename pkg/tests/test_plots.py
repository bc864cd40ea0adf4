"""
SVG 預測圖與主題
"""

import xml.etree.ElementTree as ET

import numpy as np
import pandas as pd
import pytest

from backend.errors import DataError
from frontend.plots import load_predictions, plot_predictions
from frontend.theme import Theme


def _predictions(with_var: bool = False) -> pd.DataFrame:
    rows = []
    for battery_id in ('B001', 'B000'):
        for k in range(12):
            rows.append({'battery_id': battery_id, 'end_index': 10 * k, 'y_true': 100.0 - 5 * k,
                         'y_pred': 98.0 - 5 * k})
    frame = pd.DataFrame(rows)
    if with_var:
        frame['var'] = np.linspace(1.0, 9.0, len(frame))
    return frame


def test_svg_is_well_formed(tmp_path):
    out = plot_predictions(_predictions(), tmp_path / 'pred.svg')
    root = ET.parse(out).getroot()
    assert root.tag.endswith('svg')


def test_variance_band_adds_a_fill(tmp_path):
    plain = plot_predictions(_predictions(), tmp_path / 'plain.svg').read_text(encoding='utf-8')
    banded = plot_predictions(_predictions(with_var=True), tmp_path / 'band.svg').read_text(encoding='utf-8')
    assert '±2σ' not in plain
    assert len(banded) > len(plain)


def test_output_is_deterministic(tmp_path):
    a = plot_predictions(_predictions(True), tmp_path / 'a.svg', theme='dark').read_bytes()
    b = plot_predictions(_predictions(True), tmp_path / 'b.svg', theme='dark').read_bytes()
    assert a == b


def test_load_predictions_from_csv(tmp_path):
    path = tmp_path / 'pred.csv'
    _predictions(True).to_csv(path, index=False)
    frame = load_predictions(path)
    assert frame['battery_id'].iloc[0] == 'B001'
    assert frame['var'].dtype == np.float64


@pytest.mark.parametrize('content, match', [
    ('battery_id,end_index,y_true\nB1,0,1.0\n', '缺少欄位'),
    ('battery_id,end_index,y_true,y_pred\nB1,0,1.0,x\n', '第 2 行'),
    ('battery_id,end_index,y_true,y_pred,var\nB1,0,1.0,1.0,-1\n', 'var'),
])
def test_load_predictions_rejects_bad_files(tmp_path, content, match):
    path = tmp_path / 'pred.csv'
    path.write_text(content, encoding='utf-8')
    with pytest.raises(DataError, match=match):
        load_predictions(path)


def test_missing_file(tmp_path):
    with pytest.raises(DataError):
        load_predictions(tmp_path / 'none.csv')


def test_empty_predictions(tmp_path):
    with pytest.raises(DataError):
        plot_predictions(_predictions().iloc[:0], tmp_path / 'x.svg')


def test_themes():
    assert Theme.get_theme('DARK') is Theme.DARK
    assert Theme.rc_params('light')['figure.facecolor'] == '#ffffff'
    with pytest.raises(ValueError):
        Theme.get_theme('solarized')
