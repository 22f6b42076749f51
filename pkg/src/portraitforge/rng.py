"""Deterministic 64-bit hashing and pseudo-random streams.

Everything stochastic in the mock stack derives from splitmix64 so that
results are bit-identical across platforms and across the compiled and
pure-Python kernel backends. Python ints must be masked to 64 bits
explicitly; numpy uint64 arithmetic wraps natively.
"""

from __future__ import annotations

import numpy as np

MASK64 = 0xFFFFFFFFFFFFFFFF

_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def splitmix64(x: int) -> int:
    """One splitmix64 mixing step used as a 64-bit hash."""
    x = (x + _GOLDEN) & MASK64
    x = ((x ^ (x >> 30)) * _MIX1) & MASK64
    x = ((x ^ (x >> 27)) * _MIX2) & MASK64
    return (x ^ (x >> 31)) & MASK64


def fnv1a64(data: bytes | str) -> int:
    """FNV-1a of a byte string; stable across processes (unlike hash())."""
    if isinstance(data, str):
        data = data.encode("utf-8")
    h = _FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * _FNV_PRIME) & MASK64
    return h


def unit_from_bits(z: int) -> float:
    """Map 64 random bits to a float in [-1, 1): top 53 bits over 2**52, minus 1."""
    return (z >> 11) / 4503599627370496.0 - 1.0


class SplitMixStream:
    """Counter-based splitmix64 stream yielding floats in [-1, 1)."""

    def __init__(self, seed: int):
        self._state = seed & MASK64

    def next_bits(self) -> int:
        self._state = (self._state + _GOLDEN) & MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * _MIX1) & MASK64
        z = ((z ^ (z >> 27)) * _MIX2) & MASK64
        return (z ^ (z >> 31)) & MASK64

    def next_unit(self) -> float:
        return unit_from_bits(self.next_bits())

    def fill(self, shape: tuple[int, ...]) -> np.ndarray:
        """Array of floats in [-1, 1) in row-major order, float32."""
        n = int(np.prod(shape))
        out = np.empty(n, dtype=np.float64)
        for i in range(n):
            out[i] = self.next_unit()
        return out.reshape(shape).astype(np.float32)


def splitmix64_array(x: np.ndarray) -> np.ndarray:
    """Vectorized splitmix64 over a uint64 array."""
    x = x.astype(np.uint64, copy=True)
    with np.errstate(over="ignore"):
        x += np.uint64(_GOLDEN)
        x = (x ^ (x >> np.uint64(30))) * np.uint64(_MIX1)
        x = (x ^ (x >> np.uint64(27))) * np.uint64(_MIX2)
        x ^= x >> np.uint64(31)
    return x
