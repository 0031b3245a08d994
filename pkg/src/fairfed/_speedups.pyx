# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops: Gaussian kernel sums, dyadic leaf binning, tail sums.

Each function mirrors the numpy version in ``_pure.py`` exactly; the test
suite runs both and compares.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, ceil

cnp.import_array()


def kernel_sums(const double[:, ::1] points, const double[:, ::1] queries,
                double h, const double[:, ::1] weights):
    """out[q, c] = sum_i weights[i, c] * exp(-|points[i] - queries[q]|^2 / (2 h^2)).

    The kernel is a product over coordinates, so each point needs one exp per
    distinct query coordinate; on a lattice that is far fewer than one per query.
    """
    cdef Py_ssize_t n = points.shape[0], m = queries.shape[0]
    cdef Py_ssize_t d = points.shape[1], nc = weights.shape[1]
    cdef Py_ssize_t i, q, k, c, u, off
    cdef double diff
    cdef double scale = -0.5 / (h * h)
    out = np.zeros((m, nc), dtype=np.float64)
    cdef double[:, ::1] o = out
    uniq, inv = [], []
    for k in range(d):
        vals, idx = np.unique(np.asarray(queries[:, k]), return_inverse=True)
        uniq.append(vals)
        inv.append(idx.ravel())
    # flat per-dimension tables: unique values and each query's index into them
    offsets = np.concatenate([[0], np.cumsum([len(v) for v in uniq])]).astype(np.intp)
    cdef const double[::1] uv = np.ascontiguousarray(np.concatenate(uniq) if d else np.zeros(0))
    cdef const Py_ssize_t[::1] uoff = offsets
    cdef const Py_ssize_t[:, ::1] qi = np.ascontiguousarray(
        np.stack(inv, axis=1).astype(np.intp) if d else np.zeros((m, 0), dtype=np.intp))
    # fac[u, i] = exp(scale * (points[i, k] - uv[u])^2) for the dimension k owning u
    fac_arr = np.empty((offsets[-1], n), dtype=np.float64)
    cdef double[:, ::1] fac = fac_arr
    cdef const double[:, ::1] wt = np.ascontiguousarray(np.asarray(weights).T)
    krow_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] krow = krow_arr
    cdef double a0, a1, a2, a3
    with nogil:
        for k in range(d):
            for u in range(uoff[k], uoff[k + 1]):
                for i in range(n):
                    diff = points[i, k] - uv[u]
                    fac[u, i] = exp(diff * diff * scale)
        for q in range(m):
            for i in range(n):
                krow[i] = 1.0
            for k in range(d):
                off = uoff[k] + qi[q, k]
                for i in range(n):
                    krow[i] = krow[i] * fac[off, i]
            for c in range(nc):
                # four partial sums break the serial add dependency
                a0 = a1 = a2 = a3 = 0.0
                i = 0
                while i + 4 <= n:
                    a0 = a0 + wt[c, i] * krow[i]
                    a1 = a1 + wt[c, i + 1] * krow[i + 1]
                    a2 = a2 + wt[c, i + 2] * krow[i + 2]
                    a3 = a3 + wt[c, i + 3] * krow[i + 3]
                    i = i + 4
                while i < n:
                    a0 = a0 + wt[c, i] * krow[i]
                    i = i + 1
                o[q, c] = (a0 + a1) + (a2 + a3)
    return out


def leaf_counts(const double[::1] z, int depth):
    """Histogram of z over the 2**depth half-open leaves of [-1, 1] (last leaf closed)."""
    cdef Py_ssize_t nleaf = 1 << depth
    cdef double width = 2.0 / nleaf
    cdef Py_ssize_t i, j
    cdef double v
    counts = np.zeros(nleaf, dtype=np.int64)
    cdef cnp.int64_t[::1] cnt = counts
    for i in range(z.shape[0]):
        v = z[i]
        if not (-1.0 <= v <= 1.0):
            raise ValueError(f"z value {v} outside [-1, 1]")
        # 0-based leaf whose left edge -1 + j*width is <= v; edges are exact dyadics
        j = <Py_ssize_t>((v + 1.0) / width)
        if j >= nleaf:
            j = nleaf - 1
        while j > 0 and -1.0 + j * width > v:
            j -= 1
        while j + 1 < nleaf and -1.0 + (j + 1) * width <= v:
            j += 1
        cnt[j] += 1
    return counts


def tail_sums(list levels, int depth):
    """Tail(tau_j) for j = 1..2**depth + 1 from per-level node values.

    ``levels[l - 1]`` holds the 2**l node values of level l. Index 0 of the
    result is the root special case (sum of the level-1 nodes), the last entry
    is the empty suffix.
    """
    cdef Py_ssize_t nleaf = 1 << depth
    cdef Py_ssize_t j, lev, width, kstar
    cdef double acc
    out = np.zeros(nleaf + 1, dtype=np.float64)
    cdef double[::1] o = out
    # level l occupies flat[2^l - 2 : 2^(l+1) - 2]
    cdef const double[::1] flat = np.ascontiguousarray(
        np.concatenate([np.asarray(v, dtype=np.float64).ravel() for v in levels]))
    o[0] = flat[0] + flat[1]
    with nogil:
        for j in range(2, nleaf + 1):
            acc = 0.0
            for lev in range(1, depth + 1):
                width = 1 << (depth - lev)
                # smallest node index (1-based) whose first leaf is >= j
                kstar = (j - 2) // width + 2
                if kstar <= (1 << lev) and kstar % 2 == 0:
                    acc += flat[(1 << lev) - 2 + kstar - 1]
            o[j - 1] = acc
        o[nleaf] = 0.0
    return out
