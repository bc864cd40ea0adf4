"""
計數器式隨機數串流
Counter-based Seeded RNG Streams

以 (seed, 串流鍵...) 決定 Philox 產生器，抽樣結果與呼叫順序無關。
"""

import zlib
from typing import Union

import numpy as np

Key = Union[int, str]

_MASK64 = (1 << 64) - 1


def _key_word(key: Key) -> int:
    if isinstance(key, str):
        return zlib.crc32(key.encode('utf-8'))
    return int(key) & _MASK64


def stream(seed: int, *keys: Key) -> np.random.Generator:
    """
    取得 (seed, keys) 對應的獨立產生器

    Args:
        seed: 實驗種子
        keys: 串流識別，例如 ('gumbel', epoch, batch)

    Returns:
        numpy Generator（Philox）
    """
    words = [_key_word(seed)] + [_key_word(k) for k in keys]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(words)))


class RngStreams:
    """綁定種子的串流工廠"""

    def __init__(self, seed: int, *prefix: Key):
        self.seed = int(seed)
        self.prefix = prefix

    def get(self, *keys: Key) -> np.random.Generator:
        return stream(self.seed, *self.prefix, *keys)

    def child(self, *keys: Key) -> 'RngStreams':
        return RngStreams(self.seed, *self.prefix, *keys)
