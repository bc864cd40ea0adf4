"""
二進位檢查點格式
"""

import struct

import numpy as np
import pytest

from backend.autodiff.checkpoint import FORMAT_VERSION, MAGIC, load_checkpoint, save_checkpoint
from backend.errors import CheckpointError


@pytest.fixture
def arrays(rng):
    return {
        'node_emb': rng.normal(size=(6, 4)),
        'head.bias': np.array([0.25]),
        'scalar': np.array(3.5),
    }


def test_round_trip_preserves_arrays_and_header(tmp_path, arrays):
    path = save_checkpoint(tmp_path / 'model.bgn', arrays, {'seed': 3, 'variant': 'bgn'})
    header, loaded = load_checkpoint(path)

    assert header == {'seed': 3, 'variant': 'bgn'}
    assert list(loaded) == list(arrays)
    for name, value in arrays.items():
        assert loaded[name].shape == np.shape(value)
        np.testing.assert_array_equal(loaded[name], value)


def test_file_layout_starts_with_magic_and_version(tmp_path, arrays):
    raw = save_checkpoint(tmp_path / 'model.bgn', arrays, {}).read_bytes()
    assert raw[:4] == MAGIC
    assert struct.unpack('<I', raw[4:8])[0] == FORMAT_VERSION


def test_identical_inputs_give_identical_bytes(tmp_path, arrays):
    a = save_checkpoint(tmp_path / 'a.bgn', arrays, {'x': 1, 'y': 2}).read_bytes()
    b = save_checkpoint(tmp_path / 'b.bgn', arrays, {'y': 2, 'x': 1}).read_bytes()
    assert a == b


def test_bad_magic(tmp_path, arrays):
    path = save_checkpoint(tmp_path / 'model.bgn', arrays, {})
    path.write_bytes(b'XXXX' + path.read_bytes()[4:])
    with pytest.raises(CheckpointError, match='magic'):
        load_checkpoint(path)


def test_unsupported_version(tmp_path, arrays):
    path = save_checkpoint(tmp_path / 'model.bgn', arrays, {})
    raw = path.read_bytes()
    path.write_bytes(raw[:4] + struct.pack('<I', FORMAT_VERSION + 1) + raw[8:])
    with pytest.raises(CheckpointError, match='版本'):
        load_checkpoint(path)


def test_truncated_file(tmp_path, arrays):
    path = save_checkpoint(tmp_path / 'model.bgn', arrays, {})
    path.write_bytes(path.read_bytes()[:-5])
    with pytest.raises(CheckpointError, match='截斷'):
        load_checkpoint(path)


def test_missing_file(tmp_path):
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / 'nope.bgn')
