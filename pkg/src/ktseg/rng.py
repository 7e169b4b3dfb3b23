"""Deterministic PRNG used for case splitting and phantom corruption.

xorshift64* with the multiplier 0x2545F4914F6CDD1D:

    x ^= x >> 12;  x ^= x << 25;  x ^= x >> 27;  return x * M mod 2^64

The generator, the bounded draw (plain modulo) and the Fisher-Yates sweep
are all fixed here so a split or phantom can be reproduced byte-for-byte
from the seed alone, in any language.
"""

from __future__ import annotations

_MASK = (1 << 64) - 1
_MULT = 0x2545F4914F6CDD1D
# substitute state for seed 0 (xorshift state must be nonzero)
_ZERO_SEED_STATE = 0x9E3779B97F4A7C15


class Xorshift64Star:
    def __init__(self, seed: int):
        self._state = (int(seed) & _MASK) or _ZERO_SEED_STATE

    def next_u64(self) -> int:
        x = self._state
        x ^= x >> 12
        x ^= (x << 25) & _MASK
        x ^= x >> 27
        self._state = x
        return (x * _MULT) & _MASK

    def next_below(self, n: int) -> int:
        """Integer in [0, n) as next_u64() % n."""
        if n <= 0:
            raise ValueError(f"bound must be positive, got {n}")
        return self.next_u64() % n

    def next_float(self) -> float:
        """Float in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * (2.0 ** -53)

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates: for i = n-1 .. 1, swap(i, next_below(i+1))."""
        for i in range(len(items) - 1, 0, -1):
            j = self.next_below(i + 1)
            items[i], items[j] = items[j], items[i]
