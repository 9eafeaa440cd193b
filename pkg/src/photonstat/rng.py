"""Counter-based random streams keyed by run seed and position.

A :class:`KeyedStream` hands out independent :class:`numpy.random.Generator`
objects backed by Philox. The 64-bit seed is the Philox key; the stream
block index and stream tag are written into the two high words of the
256-bit counter and an optional substream (e.g. a sweep point) into the
second word; draws advance only the lowest word. Any (seed, indices) pair therefore names a
fixed, non-overlapping block of random numbers, so shots can be generated
by any worker in any order with identical results.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1

#: stream tags
OUTCOMES = 0
CHAIN_NOISE = 1
PILOT = 2


class KeyedStream:
    """Factory of reproducible Philox generators."""

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64

    def generator(self, index: int, tag: int = 0, substream: int = 0) -> np.random.Generator:
        """Generator for block ``index`` of stream ``tag``."""
        words = [0, int(substream) & _MASK64, int(index) & _MASK64, int(tag) & _MASK64]
        counter = np.array(words, dtype=np.uint64)
        return np.random.Generator(np.random.Philox(counter=counter, key=self.seed))

    def __repr__(self):
        return f"KeyedStream(seed={self.seed})"


def as_generator(rng) -> np.random.Generator:
    """Accept a Generator, a KeyedStream or an int seed."""
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, KeyedStream):
        return rng.generator(0)
    return np.random.default_rng(rng)
