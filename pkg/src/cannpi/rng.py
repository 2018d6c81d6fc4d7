"""SplitMix64, the pinned generator behind every dataset.

State transition and output (all arithmetic mod 2**64)::

    state  = state + 0x9E3779B97F4A7C15
    z      = state
    z      = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z      = (z ^ (z >> 27)) * 0x94D049BB133111EB
    output = z ^ (z >> 31)

Floats use the top 53 bits: ``(output >> 11) * 2**-53`` in [0, 1).
Integers in [lo, hi] are ``lo + floor(float * (hi - lo + 1))``.
Child streams are seeded with ``mix64(parent_seed ^ mix64(key))``
where ``mix64`` is the output function applied to ``x + golden``;
dataset sequences use ``key = split_tag * 2**32 + index``.
"""

from __future__ import annotations

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def mix64(x: int) -> int:
    z = (x + GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


class SplitMix64:
    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def random(self) -> float:
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.random()

    def integers(self, lo: int, hi: int) -> int:
        """Uniform integer in the closed range [lo, hi]."""
        return lo + int(self.random() * (hi - lo + 1))

    def split(self, key: int) -> "SplitMix64":
        return SplitMix64(derive_seed(self.state, key))


def derive_seed(seed: int, key: int) -> int:
    return mix64((seed & MASK64) ^ mix64(key & MASK64))
