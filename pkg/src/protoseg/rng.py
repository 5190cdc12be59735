"""Seeded xoshiro256** generator.

Every random draw in the package flows through :class:`Xoshiro256`, so a
seed fully determines generated datasets, sampled episodes, weight
initialisation and training order. The state is seeded from a 64-bit
integer with SplitMix64, exactly as in the public reference code by
Blackman and Vigna, which makes the streams reproducible from any language.
"""
from __future__ import annotations

import math

import numpy as np

_MASK = (1 << 64) - 1


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK


def splitmix64(state: int) -> tuple[int, int]:
    """Advance a SplitMix64 state; returns ``(new_state, output)``."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return state, z ^ (z >> 31)


class Xoshiro256:
    """xoshiro256** 1.0 with a few convenience samplers on top.

    Derived quantities are defined precisely so other implementations can
    follow them:

    * ``random()``: ``(next_u64() >> 11) * 2**-53``, in ``[0, 1)``.
    * ``integers(n)``: rejection sampling on the top ``bit_length(n-1)`` bits,
      unbiased, in ``[0, n)``.
    * ``normal()``: Box-Muller on two ``random()`` draws, using
      ``1 - u1`` so the logarithm never sees zero; the sine branch is
      discarded to keep the stream stateless between calls.
    """

    def __init__(self, seed: int = 0):
        seed = int(seed) & _MASK
        s = []
        for _ in range(4):
            seed, out = splitmix64(seed)
            s.append(out)
        self._s = s

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self._s
        result = (_rotl((s1 * 5) & _MASK, 7) * 9) & _MASK
        t = (s1 << 17) & _MASK
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self._s = [s0, s1, s2, s3]
        return result

    def random(self) -> float:
        return (self.next_u64() >> 11) * (1.0 / 9007199254740992.0)

    def uniform(self, low: float = 0.0, high: float = 1.0) -> float:
        return low + (high - low) * self.random()

    def integers(self, n: int) -> int:
        if n <= 0:
            raise ValueError("n must be positive")
        if n == 1:
            return 0
        bits = (n - 1).bit_length()
        while True:
            r = self.next_u64() >> (64 - bits)
            if r < n:
                return r

    def normal(self, mean: float = 0.0, std: float = 1.0) -> float:
        u1 = self.random()
        u2 = self.random()
        return mean + std * math.sqrt(-2.0 * math.log(1.0 - u1)) * math.cos(2.0 * math.pi * u2)

    def normal_array(self, shape, std: float = 1.0) -> np.ndarray:
        """Array of ``normal()`` draws in row-major order."""
        n = int(np.prod(shape))
        raw = np.fromiter((self.next_u64() >> 11 for _ in range(2 * n)), dtype=np.float64, count=2 * n)
        u = raw * (1.0 / 9007199254740992.0)
        u1, u2 = u[0::2], u[1::2]
        z = np.sqrt(-2.0 * np.log(1.0 - u1)) * np.cos(2.0 * np.pi * u2)
        return (std * z).reshape(shape)

    def uniform_array(self, shape, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        n = int(np.prod(shape))
        raw = np.fromiter((self.next_u64() >> 11 for _ in range(n)), dtype=np.float64, count=n)
        return (low + (high - low) * raw * (1.0 / 9007199254740992.0)).reshape(shape)

    def sample(self, population, k: int) -> list:
        """``k`` distinct items by a partial Fisher-Yates shuffle, in draw order."""
        pool = list(population)
        if k > len(pool):
            raise ValueError("sample larger than population")
        for i in range(k):
            j = i + self.integers(len(pool) - i)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:k]

    def spawn(self) -> "Xoshiro256":
        """Independent child generator seeded from this stream."""
        return Xoshiro256(self.next_u64())
