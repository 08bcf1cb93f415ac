"""Portable seeded random streams.

The generator is xoshiro256** with its 256-bit state filled by four
successive SplitMix64 outputs of the 64-bit seed. Uniform doubles take the
top 53 bits of each output; Gaussians come in Box-Muller pairs
``(r cos t, r sin t)`` with ``r = sqrt(-2 ln(1 - u1))`` and ``t = 2 pi u2``.
Any implementation following these rules reproduces the same sequences,
which is what makes random-feature projections and random masks portable
across languages.
"""

import math

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(state):
    """One SplitMix64 step. Returns ``(new_state, output)``."""
    state = (state + _GOLDEN) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def _rotl(x, k):
    return ((x << k) | (x >> (64 - k))) & _MASK64


class Xoshiro256:
    """xoshiro256** seeded through SplitMix64."""

    def __init__(self, seed):
        if seed < 0 or seed > _MASK64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
        sm = seed
        state = []
        for _ in range(4):
            sm, out = splitmix64(sm)
            state.append(out)
        self._s = state

    def next_u64(self):
        s0, s1, s2, s3 = self._s
        result = (_rotl((s1 * 5) & _MASK64, 7) * 9) & _MASK64
        t = (s1 << 17) & _MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self._s = [s0, s1, s2, s3]
        return result

    def uniform(self):
        """Double in [0, 1) built from the top 53 bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def below(self, n):
        """Unbiased integer in [0, n) by rejection on the top bits."""
        if n <= 0:
            raise ValueError("n must be positive")
        if n == 1:
            return 0
        bits = (n - 1).bit_length()
        while True:
            r = self.next_u64() >> (64 - bits)
            if r < n:
                return r

    def normals(self, count):
        """``count`` standard normal draws, in Box-Muller pair order."""
        out = np.empty(count, dtype=np.float64)
        i = 0
        while i < count:
            u1 = self.uniform()
            u2 = self.uniform()
            r = math.sqrt(-2.0 * math.log(1.0 - u1))
            t = 2.0 * math.pi * u2
            out[i] = r * math.cos(t)
            if i + 1 < count:
                out[i + 1] = r * math.sin(t)
            i += 2
        return out
