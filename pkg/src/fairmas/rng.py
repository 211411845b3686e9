"""Counter-based deterministic random streams (splitmix64).

Every uniform variate drawn anywhere in this package is a pure function of a
64-bit seed and a draw index:

    draw(seed, k) = mix64((seed + (k + 1) * GOLDEN) mod 2**64)

where ``mix64`` is the splitmix64 finalizer and GOLDEN is 2**64 divided by
the golden ratio.  ``draw(seed, k)`` is exactly the k-th output of the
standard splitmix64 generator seeded with ``seed``, so consumers can address
draws by index instead of sharing generator state.  Results are therefore
independent of how work is partitioned across workers: a worker handling
sample i simply reads the draws at sample i's counter offsets.

Unit variates take the top 53 bits, giving doubles uniform on [0, 1).
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

_U_GOLDEN = np.uint64(GOLDEN)
_U_MIX1 = np.uint64(_MIX1)
_U_MIX2 = np.uint64(_MIX2)
_U30 = np.uint64(30)
_U27 = np.uint64(27)
_U31 = np.uint64(31)
_U11 = np.uint64(11)
_UNIT_SCALE = 2.0**-53


def mix64(z: int) -> int:
    """splitmix64 finalizer on a 64-bit integer."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return z ^ (z >> 31)


def draw(seed: int, index: int) -> int:
    """The index-th 64-bit output of the splitmix64 stream for ``seed``."""
    return mix64((seed + ((index + 1) * GOLDEN)) & MASK64)


def unit(seed: int, index: int) -> float:
    """The index-th uniform double in [0, 1) of the stream for ``seed``."""
    return (draw(seed, index) >> 11) * _UNIT_SCALE


def units_at(seed: int, counters: np.ndarray) -> np.ndarray:
    """Vectorized ``unit``: uniforms at the given draw counters (uint64 array)."""
    z = (np.uint64(seed & MASK64) + (counters + np.uint64(1)) * _U_GOLDEN).astype(
        np.uint64
    )
    z = (z ^ (z >> _U30)) * _U_MIX1
    z = (z ^ (z >> _U27)) * _U_MIX2
    z = z ^ (z >> _U31)
    return (z >> _U11).astype(np.float64) * _UNIT_SCALE


def substream_seed(seed: int, index: int) -> int:
    """Derive an independent child seed for substream ``index`` of ``seed``."""
    return draw(seed, index)


class Stream:
    """Sequential view over the counter-based stream for one seed.

    ``Stream(seed, counter)`` reads draws ``counter, counter+1, ...`` of the
    splitmix64 sequence for ``seed``; two streams with the same arguments
    yield identical values.
    """

    __slots__ = ("seed", "counter")

    def __init__(self, seed: int, counter: int = 0) -> None:
        self.seed = seed & MASK64
        self.counter = counter

    def next_u64(self) -> int:
        value = draw(self.seed, self.counter)
        self.counter += 1
        return value

    def next_unit(self) -> float:
        return (self.next_u64() >> 11) * _UNIT_SCALE
