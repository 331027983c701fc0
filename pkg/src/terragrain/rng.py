"""Portable 64-bit random stream.

SplitMix64 (Steele, Lea & Flood 2014) with its published constants.  Every
random decision in the pipeline draws from one of these streams so that a
run is reproducible from its seed on any platform, independent of numpy's
generator implementation.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def _mix(z: int) -> int:
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return z ^ (z >> 31)


class SplitMix64:
    """Sequential SplitMix64 generator.

    Scalar draws and the vectorised ``uniform_array`` consume the same
    underlying sequence, so mixing them is still deterministic.
    """

    def __init__(self, seed: int):
        self.state = int(seed) & MASK64

    def spawn(self, *keys: int) -> "SplitMix64":
        """Independent child stream keyed by integers (e.g. a frame id)."""
        s = _mix((self.state + GOLDEN_GAMMA) & MASK64)
        for k in keys:
            s = _mix(((s ^ (int(k) & MASK64)) + GOLDEN_GAMMA) & MASK64)
        return SplitMix64(s)

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN_GAMMA) & MASK64
        return _mix(self.state)

    def uniform(self, low: float = 0.0, high: float = 1.0) -> float:
        u = (self.next_u64() >> 11) * (1.0 / (1 << 53))
        return low + (high - low) * u

    def randint(self, n: int) -> int:
        """Uniform integer in ``[0, n)``."""
        if n <= 0:
            raise ValueError("randint bound must be positive")
        return ((self.next_u64() >> 11) * n) >> 53

    def bernoulli(self, p: float) -> bool:
        return self.uniform() < p

    def choice_without_replacement(self, n: int, k: int) -> list[int]:
        """``k`` distinct indices from ``range(n)`` via partial Fisher-Yates."""
        pool = list(range(n))
        for i in range(k):
            j = i + self.randint(n - i)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:k]

    def uniform_array(self, shape) -> np.ndarray:
        """Float64 array in ``[0, 1)``; equals ``prod(shape)`` scalar draws."""
        n = int(np.prod(shape))
        with np.errstate(over="ignore"):
            idx = np.arange(1, n + 1, dtype=np.uint64)
            z = np.uint64(self.state) + idx * np.uint64(GOLDEN_GAMMA)
            z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
            z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
            z = z ^ (z >> np.uint64(31))
        self.state = (self.state + n * GOLDEN_GAMMA) & MASK64
        return ((z >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))).reshape(shape)
