"""Deterministic derived random streams.

One user-facing seed; independent sub-streams are derived from
``SeedSequence(seed, spawn_key=key)``.  The key is the ordinal position of
the consumer (stratum index, bootstrap replicate, ...) in a deterministic
enumeration order, so results do not depend on how work is scheduled.
"""

from __future__ import annotations

import numpy as np


def substream(seed: int, *key: int) -> np.random.Generator:
    """Generator for sub-stream ``key`` of the master ``seed``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.default_rng(ss)


def batch_se(values: np.ndarray, n_batches: int = 10) -> float:
    """Batch-means standard error of the mean of ``values``.

    Splits the sample into ``n_batches`` contiguous batches and returns
    std(batch means)/sqrt(n_batches).
    """
    values = np.asarray(values, dtype=float)
    n = values.size
    if n < n_batches:
        n_batches = max(2, n)
    k = n // n_batches
    if k == 0:
        return float("nan")
    means = values[: k * n_batches].reshape(n_batches, k).mean(axis=1)
    return float(np.std(means, ddof=1) / np.sqrt(n_batches))
