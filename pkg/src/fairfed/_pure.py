"""Numpy implementations of the hot kernels (fallback for ``_speedups``)."""

from __future__ import annotations

import numpy as np
from scipy.spatial.distance import cdist

_CHUNK = 2048


def kernel_sums(points, queries, h, weights):
    """out[q, c] = sum_i weights[i, c] * exp(-|points[i] - queries[q]|^2 / (2 h^2))."""
    points = np.asarray(points, dtype=np.float64)
    queries = np.asarray(queries, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    out = np.zeros((queries.shape[0], weights.shape[1]))
    if points.shape[0] == 0:
        return out
    scale = -0.5 / (h * h)
    for start in range(0, queries.shape[0], _CHUNK):
        block = queries[start:start + _CHUNK]
        kv = np.exp(cdist(block, points, "sqeuclidean") * scale)
        out[start:start + _CHUNK] = kv @ weights
    return out


def leaf_counts(z, depth):
    z = np.asarray(z, dtype=np.float64)
    if z.size and (np.any(~(z >= -1.0)) or np.any(~(z <= 1.0))):
        raise ValueError("z values outside [-1, 1]")
    nleaf = 1 << depth
    edges = -1.0 + np.arange(nleaf) * (2.0 / nleaf)
    j = np.searchsorted(edges, z, side="right") - 1
    return np.bincount(j, minlength=nleaf).astype(np.int64)


def tail_sums(levels, depth):
    nleaf = 1 << depth
    out = np.zeros(nleaf + 1)
    out[0] = levels[0][0] + levels[0][1]
    j = np.arange(2, nleaf + 1)
    for lev in range(1, depth + 1):
        width = 1 << (depth - lev)
        kstar = (j - 2) // width + 2
        take = (kstar <= (1 << lev)) & (kstar % 2 == 0)
        vals = np.asarray(levels[lev - 1], dtype=np.float64)
        out[j[take] - 1] += vals[kstar[take] - 1]
    return out
