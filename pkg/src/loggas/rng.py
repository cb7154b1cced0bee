"""Random streams for experiments.

Every work unit i of a run draws from

    Generator(Philox(seed).jumped(i))

Philox is counter based; ``jumped(i)`` advances the counter by i * 2^128
draws, so the streams never overlap in practice and depend only on the
master seed and the unit index.  How units are spread over worker
processes has no effect on what any unit sees.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError


def check_seed(seed) -> int:
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)) or not 0 <= int(seed) < 2 ** 64:
        raise ConfigError(f"seed must be an unsigned 64-bit integer, got {seed!r}", "seed")
    return int(seed)


def stream(seed: int, index: int) -> np.random.Generator:
    """Generator for work unit ``index`` under master ``seed``."""
    if index < 0:
        raise ValueError("stream index must be nonnegative")
    return np.random.Generator(np.random.Philox(check_seed(seed)).jumped(int(index)))


def unit_seed(seed: int, index: int) -> int:
    """A 63-bit integer seed drawn from the unit stream (for APIs taking ints)."""
    return int(stream(seed, index).integers(0, 2 ** 63 - 1))
