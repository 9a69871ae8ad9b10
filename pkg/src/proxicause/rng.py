"""Seed derivation for reproducible, parallel-safe random streams.

Every stochastic routine in this package draws from a generator obtained
through :func:`derive_rng`.  A seed is an integer or a tuple of integers;
extending the tuple with an integer path (run index, stream tag, retry
attempt, ...) names a new stream.  The tuple is fed to numpy's
``SeedSequence``, whose internal hashing decorrelates the streams, so
identical (seed, path) pairs always produce identical draws regardless of
how work is scheduled across threads.
"""

from __future__ import annotations

from typing import Sequence, Union

import numpy as np

SeedLike = Union[int, Sequence[int]]


def child_seed(seed: SeedLike, *path: int) -> tuple[int, ...]:
    """Extend ``seed`` with ``path``, naming a derived stream."""
    if isinstance(seed, (int, np.integer)):
        entropy: tuple[int, ...] = (int(seed),)
    else:
        entropy = tuple(int(s) for s in seed)
    entropy = entropy + tuple(int(p) for p in path)
    if any(s < 0 for s in entropy):
        raise ValueError(f"seed components must be non-negative, got {entropy}")
    return entropy


def derive_rng(seed: SeedLike, *path: int) -> np.random.Generator:
    """Return the generator for the stream named by ``seed`` and ``path``."""
    return np.random.default_rng(np.random.SeedSequence(child_seed(seed, *path)))
