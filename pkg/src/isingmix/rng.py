"""Counter-based random number generation with named substreams.

All samplers in this package take an explicit ``numpy.random.Generator``.
Generators are built on Philox (counter-based, 64-bit keys), so a
(seed, stream) pair fully determines the output and distinct streams are
independent. Replication r of an experiment uses ``make_rng(seed, r)``.
"""

from __future__ import annotations

import numpy as np

GENERATOR_NAME = "philox4x64"


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Generator for a named substream of a 64-bit seed."""
    if not 0 <= int(seed) < 2**64:
        raise ValueError("seed must fit in 64 bits")
    if not 0 <= int(stream) < 2**64:
        raise ValueError("stream must fit in 64 bits")
    key = np.array([seed, stream], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
