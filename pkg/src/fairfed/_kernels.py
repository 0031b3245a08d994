"""Backend selection for the hot kernels.

The compiled ``_speedups`` extension is used when it imports; otherwise, or
when ``FAIRFED_PURE_PYTHON=1`` is set, the numpy versions in ``_pure`` are.
"""

import os

import numpy as np

from fairfed import _pure

if os.environ.get("FAIRFED_PURE_PYTHON") == "1":
    _impl = _pure
    BACKEND = "python"
else:
    try:
        from fairfed import _speedups as _impl
        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pure
        BACKEND = "python"


def _c(arr):
    return np.ascontiguousarray(arr, dtype=np.float64)


def kernel_sums(points, queries, h, weights):
    """Weighted Gaussian kernel sums, shape (len(queries), weights.shape[1])."""
    return _impl.kernel_sums(_c(points), _c(queries), float(h), _c(weights))


def leaf_counts(z, depth):
    """Counts of z in the 2**depth dyadic leaves of [-1, 1]."""
    return _impl.leaf_counts(_c(np.ravel(z)), int(depth))


def tail_sums(levels, depth):
    """Dyadic-cover suffix sums at every grid index."""
    return _impl.tail_sums([_c(v) for v in levels], int(depth))


__all__ = ["BACKEND", "kernel_sums", "leaf_counts", "tail_sums"]
