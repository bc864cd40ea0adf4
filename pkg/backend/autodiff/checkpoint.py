"""
檢查點檔案
Checkpoint File Format

  magic  "BGN1"
  u32    格式版本
  u64    JSON 區塊長度，接著 UTF-8 JSON（設定回聲、正規化統計）
  重複紀錄直到檔尾：
    u32 名稱長度, 名稱 (UTF-8), u32 rank, rank × u64 維度, prod(dims) × f64 數值
  所有整數與浮點數皆為 little-endian。
"""

import json
import struct
from pathlib import Path
from typing import Any, Dict, Mapping, Tuple, Union

import numpy as np

from backend.errors import CheckpointError

MAGIC = b'BGN1'
FORMAT_VERSION = 1


def save_checkpoint(path: Union[str, Path], arrays: Mapping[str, np.ndarray], header: Mapping[str, Any]) -> Path:
    """
    寫入檢查點

    Args:
        path: 輸出路徑
        arrays: 名稱 → 陣列（依插入順序寫出）
        header: 可 JSON 序列化的設定回聲

    Returns:
        寫入的路徑
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    block = json.dumps(header, sort_keys=True, ensure_ascii=False).encode('utf-8')

    with open(path, 'wb') as fh:
        fh.write(MAGIC)
        fh.write(struct.pack('<I', FORMAT_VERSION))
        fh.write(struct.pack('<Q', len(block)))
        fh.write(block)
        for name, value in arrays.items():
            value = np.asarray(value, dtype=np.float64)
            encoded = name.encode('utf-8')
            fh.write(struct.pack('<I', len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack('<I', value.ndim))
            if value.ndim:
                fh.write(struct.pack(f'<{value.ndim}Q', *value.shape))
            fh.write(value.astype('<f8').tobytes(order='C'))
    return path


def _read(fh, size: int) -> bytes:
    chunk = fh.read(size)
    if len(chunk) != size:
        raise CheckpointError("檢查點檔案被截斷")
    return chunk


def load_checkpoint(path: Union[str, Path]) -> Tuple[Dict[str, Any], Dict[str, np.ndarray]]:
    """
    讀取檢查點

    Returns:
        (header, arrays)

    Raises:
        CheckpointError: magic / 版本不符或檔案截斷
    """
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"找不到檢查點: {path}")

    arrays: Dict[str, np.ndarray] = {}
    with open(path, 'rb') as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise CheckpointError(f"未知的檢查點 magic: {magic!r}")
        (version,) = struct.unpack('<I', _read(fh, 4))
        if version != FORMAT_VERSION:
            raise CheckpointError(f"不支援的檢查點版本: {version}")
        (block_len,) = struct.unpack('<Q', _read(fh, 8))
        try:
            header = json.loads(_read(fh, block_len).decode('utf-8'))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"檢查點設定區塊損毀: {exc}") from exc

        while True:
            prefix = fh.read(4)
            if not prefix:
                break
            if len(prefix) != 4:
                raise CheckpointError("檢查點檔案被截斷")
            (name_len,) = struct.unpack('<I', prefix)
            name = _read(fh, name_len).decode('utf-8')
            (rank,) = struct.unpack('<I', _read(fh, 4))
            dims = struct.unpack(f'<{rank}Q', _read(fh, 8 * rank)) if rank else ()
            count = int(np.prod(dims)) if rank else 1
            values = np.frombuffer(_read(fh, 8 * count), dtype='<f8').astype(np.float64)
            arrays[name] = values.reshape(dims)

    return header, arrays
