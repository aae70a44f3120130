"""Deterministic 64-bit random number generation.

Everything stochastic in this package flows through ``SplitMix64`` so that
runs are reproducible from a single integer seed across platforms. The
generator is the standard splitmix64: the state advances by the 64-bit
golden-ratio increment and each output is the finalizer-mixed state,

    state   = (state + 0x9E3779B97F4A7C15) mod 2^64
    z       = state
    z      ^= z >> 30;  z = (z * 0xBF58476D1CE4E5B9) mod 2^64
    z      ^= z >> 27;  z = (z * 0x94D049BB133111EB) mod 2^64
    output  = z ^ (z >> 31)

``split()`` derives an independent child stream seeded from the parent's
next output, so task-level randomness can be handed out without coupling
consumers to draw order.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def _mix(z: int) -> int:
    z ^= z >> 30
    z = (z * _MIX1) & _MASK
    z ^= z >> 27
    z = (z * _MIX2) & _MASK
    return z ^ (z >> 31)


class SplitMix64:
    """Seedable, splittable counter-based generator."""

    __slots__ = ("_state",)

    def __init__(self, seed: int):
        self._state = seed & _MASK

    @property
    def state(self) -> int:
        return self._state

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK
        return _mix(self._state)

    def split(self) -> "SplitMix64":
        """Child generator whose stream is independent of future parent draws."""
        return SplitMix64(self.next_u64())

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        """Uniform float in [lo, hi) with 53 bits of resolution."""
        u = (self.next_u64() >> 11) * (2.0**-53)
        return lo + (hi - lo) * u

    def randrange(self, n: int) -> int:
        """Integer in [0, n). Modulo bias is < 2^-40 for any n <= 2^24."""
        if n <= 0:
            raise ValueError("randrange requires n >= 1")
        return self.next_u64() % n

    def choice(self, seq):
        return seq[self.randrange(len(seq))]

    def shuffle(self, seq: list) -> None:
        """In-place Fisher-Yates, back to front."""
        for i in range(len(seq) - 1, 0, -1):
            j = self.randrange(i + 1)
            seq[i], seq[j] = seq[j], seq[i]

    def permutation(self, n: int) -> list[int]:
        idx = list(range(n))
        self.shuffle(idx)
        return idx

    def fill_uniform(self, n: int) -> np.ndarray:
        """Vectorized batch of ``n`` uniforms, identical to n calls of uniform()."""
        counters = np.arange(1, n + 1, dtype=np.uint64) * np.uint64(_GAMMA)
        z = np.uint64(self._state) + counters
        z ^= z >> np.uint64(30)
        z *= np.uint64(_MIX1)
        z ^= z >> np.uint64(27)
        z *= np.uint64(_MIX2)
        z ^= z >> np.uint64(31)
        self._state = (self._state + n * _GAMMA) & _MASK
        return (z >> np.uint64(11)).astype(np.float64) * (2.0**-53)
