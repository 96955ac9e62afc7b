"""Counter-based SplitMix64 generator.

Output ``i`` (1-based) of a stream with key ``k`` is ``mix64(k + i * GOLDEN)``
modulo 2**64, so streams are reproducible on any platform and the scalar and
vectorized paths produce identical numbers.
"""

from __future__ import annotations

import math

import numpy as np

GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
MASK64 = (1 << 64) - 1


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def _mix64_array(z: np.ndarray) -> np.ndarray:
    z = z ^ (z >> np.uint64(30))
    z = z * np.uint64(_M1)
    z = z ^ (z >> np.uint64(27))
    z = z * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


class CounterRNG:
    def __init__(self, seed: int, stream: int = 0):
        self.key = mix64((seed & MASK64) ^ mix64(stream * GOLDEN + 1))
        self.counter = 0

    def spawn(self, stream: int) -> "CounterRNG":
        """Independent child stream; does not advance this generator."""
        return CounterRNG(self.key, stream + 1)

    def next_u64(self) -> int:
        self.counter += 1
        return mix64(self.key + self.counter * GOLDEN)

    def u64_array(self, n: int) -> np.ndarray:
        idx = np.arange(self.counter + 1, self.counter + n + 1, dtype=np.uint64)
        self.counter += n
        with np.errstate(over="ignore"):
            z = np.uint64(self.key) + idx * np.uint64(GOLDEN)
            return _mix64_array(z)

    def random(self) -> float:
        """Uniform double in [0, 1)."""
        return (self.next_u64() >> 11) * 2.0 ** -53

    def random_array(self, shape) -> np.ndarray:
        n = int(np.prod(shape))
        return ((self.u64_array(n) >> np.uint64(11)).astype(np.float64) * 2.0 ** -53).reshape(shape)

    def integers(self, low: int, high: int) -> int:
        """Uniform integer in ``[low, high)``."""
        if high <= low:
            raise ValueError(f"empty range [{low}, {high})")
        return low + int(self.random() * (high - low))

    def choice(self, seq):
        return seq[self.integers(0, len(seq))]

    def bernoulli(self, p: float) -> bool:
        return self.random() < p

    def sample(self, seq, k: int) -> list:
        """``k`` distinct elements in selection order (partial Fisher-Yates)."""
        pool = list(seq)
        if k > len(pool):
            raise ValueError(f"cannot sample {k} from {len(pool)}")
        for i in range(k):
            j = self.integers(i, len(pool))
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:k]

    def normal_array(self, shape) -> np.ndarray:
        """Standard normal draws via Box-Muller."""
        n = int(np.prod(shape))
        u1 = 1.0 - self.random_array((n,))  # (0, 1]
        u2 = self.random_array((n,))
        z = np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * math.pi * u2)
        return z.reshape(shape)
