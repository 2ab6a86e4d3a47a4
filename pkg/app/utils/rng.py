"""确定性随机数流。

一个根种子按 (试验, 模块, 索引) 等键派生独立的生成器，
结果与调度顺序无关。
"""

import zlib

import numpy as np


def _key_to_int(key: str | int) -> int:
    if isinstance(key, str):
        return zlib.crc32(key.encode("utf-8"))
    if key < 0:
        raise ValueError(f"随机流键必须非负: {key}")
    return int(key)


def spawn_rng(seed: int, *keys: str | int) -> np.random.Generator:
    """按键派生随机数生成器。

    Args:
        seed: 根种子
        *keys: 派生键，字符串经CRC32映射为整数

    Returns:
        np.random.Generator
    """
    sequence = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_key_to_int(k) for k in keys))
    return np.random.default_rng(sequence)


def complex_normal(rng: np.random.Generator, shape: tuple[int, ...], variance: float = 1.0) -> np.ndarray:
    """零均值圆对称复高斯样本，总方差为 variance。"""
    scale = np.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def derive_seed(seed: int, *keys: str | int) -> int:
    """按键派生整数种子，供需要整数种子的合成函数使用。"""
    sequence = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_key_to_int(k) for k in keys))
    return int(sequence.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
