"""Portable, pinned pseudo-random number generation.

All randomness in the package flows through :class:`Rng`, a xoshiro256**
generator whose state is expanded from a 64-bit seed with SplitMix64.  Both
algorithms are defined on 64-bit unsigned integers only, so a given seed
produces the same stream on every platform and every numpy version.

Bulk arrays (dropout masks, weight init) are drawn from numpy's PCG64 *bit
generator* seeded from this stream.  Only the raw 64-bit output of PCG64 is
used, which numpy keeps stable across releases; the conversion to floats is
done here.
"""
from __future__ import annotations

import math

import numpy as np

MASK64 = (1 << 64) - 1
_TWO_M53 = 1.0 / (1 << 53)


def splitmix64(state: int) -> tuple[int, int]:
    """Advance a SplitMix64 state; return ``(new_state, output)``."""
    state = (state + 0x9E3779B97F4A7C15) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return state, z ^ (z >> 31)


def derive_seed(master: int, stage: int) -> int:
    """Child seed for pipeline stage ``stage`` of a master seed.

    The stage index is XOR-mixed into the master seed and passed through two
    SplitMix64 rounds, so neighbouring stages get unrelated streams.
    """
    state = (master & MASK64) ^ ((stage * 0xD1B54A32D192ED03) & MASK64)
    state, _ = splitmix64(state)
    _, out = splitmix64(state)
    return out


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & MASK64


class Rng:
    """xoshiro256** seeded through SplitMix64."""

    def __init__(self, seed: int):
        self.seed = seed & MASK64
        state = self.seed
        s = []
        for _ in range(4):
            state, out = splitmix64(state)
            s.append(out)
        self._s = s

    def next_u64(self) -> int:
        s = self._s
        result = (_rotl((s[1] * 5) & MASK64, 7) * 9) & MASK64
        t = (s[1] << 17) & MASK64
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def random(self) -> float:
        """Uniform float in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * _TWO_M53

    def below(self, n: int) -> int:
        """Unbiased integer in [0, n) (Lemire's multiply-shift with rejection)."""
        if n <= 0:
            raise ValueError("n must be positive")
        m = self.next_u64() * n
        low = m & MASK64
        if low < n:
            threshold = ((1 << 64) - n) % n
            while low < threshold:
                m = self.next_u64() * n
                low = m & MASK64
        return m >> 64

    def normal(self, mean: float = 0.0, sd: float = 1.0) -> float:
        """Gaussian draw by the Box-Muller transform (one output per call)."""
        u1 = 1.0 - self.random()  # (0, 1]
        u2 = self.random()
        return mean + sd * math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def choice_weighted(self, weights) -> int:
        """Index drawn with probability proportional to ``weights``."""
        u = self.random() * sum(weights)
        acc = 0.0
        for i, w in enumerate(weights):
            acc += w
            if u < acc:
                return i
        # floating round-off at the top end
        return max(i for i, w in enumerate(weights) if w > 0)

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates shuffle of ``range(n)``."""
        perm = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self.below(i + 1)
            perm[i], perm[j] = perm[j], perm[i]
        return np.asarray(perm, dtype=np.int64)

    def sample(self, n: int, k: int) -> np.ndarray:
        """``k`` distinct indices from ``range(n)`` (partial Fisher-Yates), in draw order."""
        if not 0 <= k <= n:
            raise ValueError("need 0 <= k <= n")
        pool = list(range(n))
        for i in range(k):
            j = i + self.below(n - i)
            pool[i], pool[j] = pool[j], pool[i]
        return np.asarray(pool[:k], dtype=np.int64)

    def integers(self, n: int, size: int) -> np.ndarray:
        """``size`` independent draws from [0, n)."""
        return np.fromiter((self.below(n) for _ in range(size)), dtype=np.int64, count=size)

    def uniform_array(self, shape, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        """Bulk uniform floats in [low, high) from a PCG64 raw stream."""
        size = int(np.prod(shape, dtype=np.int64))
        bits = np.random.PCG64(self.next_u64()).random_raw(size)
        u = (bits >> np.uint64(11)).astype(np.float64) * _TWO_M53
        return (low + (high - low) * u).reshape(shape)

    def spawn(self) -> "Rng":
        return Rng(self.next_u64())
