"""Empirical CDF helpers (nearest-rank, step-function convention)."""

from __future__ import annotations

import math

import numpy as np


def nearest_rank(values, p: float) -> float:
    """Smallest sample ``v`` with ``F(v) >= p``; ``inf`` entries count as samples."""
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        raise ValueError("no samples")
    if not 0.0 < p <= 1.0:
        raise ValueError(f"probability {p} outside (0, 1]")
    # round() guards against p * n landing a hair above an integer
    rank = max(int(math.ceil(round(p * v.size, 9))), 1)
    return float(v[rank - 1])


def ecdf_at(values, x: float) -> float:
    """Fraction of samples ``<= x``."""
    v = np.asarray(values, dtype=float)
    return float(np.count_nonzero(v <= x)) / v.size


def ecdf_table(values):
    """``(value, probability)`` step table over the finite samples.

    Infinite samples never appear as steps, so the table saturates at the
    fraction of finite samples.
    """
    v = np.sort(np.asarray(values, dtype=float))
    n = v.size
    finite = v[np.isfinite(v)]
    uniq, counts = np.unique(finite, return_counts=True)
    return uniq, np.cumsum(counts) / n
