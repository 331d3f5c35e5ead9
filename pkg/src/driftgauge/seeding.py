"""Deterministic seed derivation.

A single master seed drives every random choice in the toolkit.  Sub-streams
are derived by feeding the master seed plus integer stream tags into a
``SeedSequence``, which gives independent, reproducible generators without
the correlated-stream pitfalls of ``seed + offset`` arithmetic.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 63) - 1


def normalize_seed(seed: int) -> int:
    """Map an arbitrary int (negatives included) onto the non-negative range
    SeedSequence accepts, deterministically."""
    return int(seed) & _MASK


def spawn_seed(seed: int, *tags: int) -> int:
    """Derive a child seed from a master seed and a tuple of stream tags."""
    ss = np.random.SeedSequence([normalize_seed(seed), *[normalize_seed(t) for t in tags]])
    return int(ss.generate_state(1, np.uint64)[0])


def rng_for(seed: int, *tags: int) -> np.random.Generator:
    """Generator for the (seed, *tags) stream."""
    return np.random.default_rng(spawn_seed(seed, *tags) if tags else normalize_seed(seed))
