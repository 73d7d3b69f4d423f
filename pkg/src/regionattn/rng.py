"""Seeded randomness shared by every component that draws numbers.

The generator is SplitMix64: the state advances by the 64-bit golden-gamma
constant 0x9E3779B97F4A7C15 and each output is the avalanche finalizer
(xor-shift / multiply with 0xBF58476D1CE4E5B9 and 0x94D049BB133111EB) of the
new state.  The integer stream is exactly reproducible on any platform.
Floats derive from it: uniforms take the top 53 bits, normals use the
Box-Muller transform on consecutive uniforms (one spare value is cached).
"""

from __future__ import annotations

import math

import numpy as np

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def _finalize(z: int) -> int:
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
    return z ^ (z >> 31)


class SeededRng:
    """SplitMix64 stream with float helpers."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64
        self._spare_normal: float | None = None

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK64
        return _finalize(self._state)

    def uniform(self) -> float:
        """Uniform double in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * 2.0**-53

    def uniforms(self, n: int) -> np.ndarray:
        return np.array([self.uniform() for _ in range(n)], dtype=np.float64)

    def normal(self) -> float:
        """Standard normal via Box-Muller; consumes two uniforms per pair."""
        if self._spare_normal is not None:
            value = self._spare_normal
            self._spare_normal = None
            return value
        u1 = self.uniform()
        while u1 == 0.0:
            u1 = self.uniform()
        u2 = self.uniform()
        radius = math.sqrt(-2.0 * math.log(u1))
        angle = 2.0 * math.pi * u2
        self._spare_normal = radius * math.sin(angle)
        return radius * math.cos(angle)

    def normals(self, n: int) -> np.ndarray:
        return np.array([self.normal() for _ in range(n)], dtype=np.float64)

    def integer(self, low: int, high: int) -> int:
        """Integer in [low, high).  Modulo mapping; bias is < span/2**64."""
        if high <= low:
            raise ValueError(f"empty integer range [{low}, {high})")
        return low + self.next_u64() % (high - low)


def derive(seed: int, label: str) -> int:
    """Stable sub-seed for a named stream.

    FNV-1a hashes the label; the result is xor-folded into the seed and run
    through one SplitMix64 step, so distinct labels give independent streams.
    """
    h = _FNV_OFFSET
    for byte in label.encode("utf-8"):
        h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    return _finalize((((seed & _MASK64) ^ h) + _GAMMA) & _MASK64)
