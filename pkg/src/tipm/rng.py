"""Deterministic pseudo-random numbers for training and synthesis.

Every random choice in this package flows from :class:`Xoshiro256StarStar`,
a pure-Python implementation of the public-domain xoshiro256** generator
(Blackman & Vigna), with its 256-bit state expanded from a 64-bit seed by
splitmix64.  Both algorithms are fixed by this module; identical seeds give
identical streams on every run.

Reference vectors (first outputs, verified against the reference C code):

    splitmix64, seed 0:
        e220a8397b1dcdaf 6e789e6aa1b965f4 06c45d188009454f
    xoshiro256** seeded via splitmix64(0):
        99ec5f36cb75f2b4 bf6e1f784956452a 1a5f849d4933e6e0
"""

from __future__ import annotations

import math

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _splitmix64_step(state: int) -> tuple[int, int]:
    """Advance splitmix64 once; returns (new_state, output)."""
    state = (state + _GOLDEN) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def derive_seed(master: int, *keys: int) -> int:
    """Derive a child seed from a master seed and a path of integer keys.

    Child k is the (k+1)-th splitmix64 output from the parent seed, so
    distinct keys give independent-looking streams and the derivation is
    reproducible without global state.  Keys must be non-negative.
    """
    seed = master & _MASK64
    for key in keys:
        if key < 0:
            raise ValueError("stream keys must be non-negative")
        state = seed
        out = 0
        for _ in range(key + 1):
            state, out = _splitmix64_step(state)
        seed = out
    return seed


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK64


class Xoshiro256StarStar:
    """xoshiro256** generator with splitmix64 seeding.

    The raw stream is 64-bit unsigned integers; uniforms take the top 53
    bits, normals come from Box-Muller pairs.  All derived draws are fixed
    functions of the raw stream, so the whole hierarchy is reproducible.
    """

    def __init__(self, seed: int) -> None:
        self._seed = seed & _MASK64
        state = self._seed
        s = []
        for _ in range(4):
            state, out = _splitmix64_step(state)
            s.append(out)
        self._s = s
        self._spare_normal: float | None = None

    def next_u64(self) -> int:
        s = self._s
        result = (_rotl((s[1] * 5) & _MASK64, 7) * 9) & _MASK64
        t = (s[1] << 17) & _MASK64
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def uniform(self) -> float:
        """One double in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * 2.0**-53

    def uniforms(self, n: int) -> list[float]:
        return [self.uniform() for _ in range(n)]

    def normal(self) -> float:
        """One standard normal via Box-Muller (pairs cached)."""
        if self._spare_normal is not None:
            z = self._spare_normal
            self._spare_normal = None
            return z
        # u1 in (0, 1] so the log is finite.
        u1 = ((self.next_u64() >> 11) + 1) * 2.0**-53
        u2 = (self.next_u64() >> 11) * 2.0**-53
        r = math.sqrt(-2.0 * math.log(u1))
        theta = 2.0 * math.pi * u2
        self._spare_normal = r * math.sin(theta)
        return r * math.cos(theta)

    def normals(self, n: int) -> list[float]:
        return [self.normal() for _ in range(n)]

    def randint_below(self, bound: int) -> int:
        """Uniform integer in [0, bound) via the 53-bit uniform."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        return min(int(self.uniform() * bound), bound - 1)

    def spawn(self, *keys: int) -> "Xoshiro256StarStar":
        """Child generator along a key path (see :func:`derive_seed`).

        Children are keyed off the construction seed, not the current
        stream position, so spawn order cannot matter.
        """
        return Xoshiro256StarStar(derive_seed(self._seed, *keys))
