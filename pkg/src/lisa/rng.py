"""Reproducible random streams.

Every replica owns one counter-based Philox stream keyed by ``(seed, replica)``
through :class:`numpy.random.SeedSequence`.  Draws inside a replica are taken
sequentially from the counter, so a run is a pure function of
``(model, steps, seed, replica)`` regardless of how replicas are scheduled.
"""

from __future__ import annotations

import numpy as np

SEED_MASK = (1 << 64) - 1


def stream(seed: int, replica: int = 0) -> np.random.Generator:
    if seed < 0 or replica < 0:
        raise ValueError("seed and replica must be non-negative")
    ss = np.random.SeedSequence([int(seed) & SEED_MASK, int(replica)])
    return np.random.Generator(np.random.Philox(ss))


def streams(seed: int, replicas: int, start: int = 0) -> list[np.random.Generator]:
    return [stream(seed, r) for r in range(start, start + replicas)]


def as_stream(rng, replica: int = 0) -> np.random.Generator:
    """Accept a Generator or an integer seed."""
    if isinstance(rng, np.random.Generator):
        return rng
    return stream(int(rng), replica)
