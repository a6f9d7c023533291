"""Seeded weight initialization backed by a SplitMix64 stream.

Every weight tensor gets its own 64-bit seed derived from the graph seed and
the tensor name, so adding or replacing one tensor never perturbs the others.
"""
from __future__ import annotations

import numpy as np

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK = (1 << 64) - 1


def splitmix64(seed: int, n: int) -> np.ndarray:
    """Return the first ``n`` outputs of a SplitMix64 generator as uint64."""
    idx = np.arange(1, n + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(seed & _MASK) + idx * _GAMMA
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        z = z ^ (z >> np.uint64(31))
    return z


def uniform01(seed: int, n: int) -> np.ndarray:
    """Doubles in [0, 1) built from the top 53 bits of each draw."""
    return (splitmix64(seed, n) >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))


def derive_seed(graph_seed: int, name: str) -> int:
    # FNV-1a over the name, then one SplitMix64 step mixed with the graph seed.
    h = 0xCBF29CE484222325
    for b in name.encode("utf-8"):
        h = ((h ^ b) * 0x100000001B3) & _MASK
    return int(splitmix64(graph_seed ^ h, 1)[0])


def init_uniform(seed: int, shape, fan_in: int) -> np.ndarray:
    """Uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)] as float32."""
    bound = 1.0 / np.sqrt(max(int(fan_in), 1))
    n = int(np.prod(shape)) if len(shape) else 1
    u = uniform01(seed, n)
    return ((2.0 * u - 1.0) * bound).astype(np.float32).reshape(shape)
