"""SplitMix64 stream with vectorized draws.

The generator state advances by the golden-ratio increment ``0x9E3779B97F4A7C15``
and each output is the state passed through the SplitMix64 finalizer::

    z = state
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    z = z ^ (z >> 31)

all modulo 2**64. Doubles in [0, 1) use the top 53 bits (``z >> 11`` times
``2**-53``). Normals use Box-Muller on consecutive uniform pairs
``(u1, u2)``: ``sqrt(-2 ln(1 - u1)) * cos(2 pi u2)``; the sine branch is
discarded so every normal costs exactly two outputs.
"""

from __future__ import annotations

import numpy as np

GOLDEN_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_MASK = (1 << 64) - 1


def _mix(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


class SplitMix64:
    def __init__(self, seed: int):
        self.state = int(seed) & _MASK

    def next_u64(self, n: int) -> np.ndarray:
        offsets = np.arange(1, n + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            states = np.uint64(self.state) + offsets * GOLDEN_GAMMA
        self.state = (self.state + n * int(GOLDEN_GAMMA)) & _MASK
        return _mix(states)

    def uniform(self, n: int) -> np.ndarray:
        return (self.next_u64(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def normal(self, shape) -> np.ndarray:
        n = int(np.prod(shape))
        u = self.uniform(2 * n).reshape(n, 2)
        z = np.sqrt(-2.0 * np.log1p(-u[:, 0])) * np.cos(2.0 * np.pi * u[:, 1])
        return z.reshape(shape)


def derive_seed(seed: int, stream: int) -> int:
    """Independent child seed for a numbered sub-stream."""
    return int(_mix(np.array([(int(seed) ^ (stream * 0xD1B54A32D192ED03)) & _MASK], dtype=np.uint64))[0])
