"""Pinned pseudo-random streams: splitmix64 seeding xoshiro256++.

Everything here works on Python integers masked to 64 bits, so the
streams are bit-identical on every platform.  numpy's generators are
not used because their algorithms are not guaranteed stable across
releases.
"""
import math

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def _rotl(x, k):
    return ((x << k) | (x >> (64 - k))) & MASK64


def splitmix64_next(state):
    """Advance a splitmix64 state; return ``(new_state, output)``."""
    state = (state + GOLDEN) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return state, z ^ (z >> 31)


def substream_seed(seed, index):
    """Seed of the ``index``-th independent substream of ``seed``.

    This is the ``index + 1``-th splitmix64 output from ``seed``, computed
    by jumping the additive state directly.
    """
    state = (int(seed) + index * GOLDEN) & MASK64
    return splitmix64_next(state)[1]


class Xoshiro256pp:
    """xoshiro256++ generator seeded through splitmix64."""

    def __init__(self, seed):
        state = int(seed) & MASK64
        s = []
        for _ in range(4):
            state, out = splitmix64_next(state)
            s.append(out)
        if not any(s):
            s[0] = 1
        self.s = s

    @classmethod
    def from_state(cls, state):
        gen = cls.__new__(cls)
        gen.s = [int(v) & MASK64 for v in state]
        return gen

    def next_u64(self):
        s0, s1, s2, s3 = self.s
        result = (_rotl((s0 + s3) & MASK64, 23) + s0) & MASK64
        t = (s1 << 17) & MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self.s = [s0, s1, s2, s3]
        return result

    def uniform(self):
        """Double in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * (1.0 / 9007199254740992.0)

    def normal(self):
        # Box-Muller, cosine branch only; 1 - u keeps the log argument in (0, 1].
        u1 = 1.0 - self.uniform()
        u2 = self.uniform()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def uniforms(self, n):
        return np.array([self.uniform() for _ in range(n)])

    def normals(self, shape):
        size = int(np.prod(shape))
        return np.array([self.normal() for _ in range(size)]).reshape(shape)

    def ball(self, n, dim, radius=1.0):
        """``n`` points uniform in the closed ball of radius ``radius`` in R^dim."""
        out = np.empty((n, dim))
        for i in range(n):
            g = np.array([self.normal() for _ in range(dim)])
            norm = math.sqrt(float(g @ g))
            while norm == 0.0:
                g = np.array([self.normal() for _ in range(dim)])
                norm = math.sqrt(float(g @ g))
            r = radius * self.uniform() ** (1.0 / dim)
            out[i] = g * (r / norm)
        return out


def generator(seed, index=None):
    """Generator for ``seed`` or, when ``index`` is given, for one of its substreams."""
    if index is None:
        return Xoshiro256pp(seed)
    return Xoshiro256pp(substream_seed(seed, index))
