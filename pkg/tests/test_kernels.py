"""The compiled kernels and the numpy fallback must agree."""

import importlib
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fairfed import _kernels, _pure

try:
    from fairfed import _speedups
except ImportError:  # extension not built
    _speedups = None

needs_ext = pytest.mark.skipif(_speedups is None, reason="compiled extension not built")


@needs_ext
def test_backend_selected_at_import():
    assert _kernels.BACKEND == "cython"


def test_pure_python_forced_by_env():
    out = subprocess.run([sys.executable, "-c", "import fairfed; print(fairfed.BACKEND)"],
                         env={**os.environ, "FAIRFED_PURE_PYTHON": "1"},
                         capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


@needs_ext
@given(st.integers(1, 60), st.integers(1, 30), st.integers(1, 3), st.floats(0.02, 0.9),
       st.integers(0, 2**31))
def test_kernel_sums_parity(n, m, d, h, seed):
    rng = np.random.default_rng(seed)
    p, q, w = rng.random((n, d)), rng.random((m, d)), rng.random((n, 2))
    np.testing.assert_allclose(_speedups.kernel_sums(p, q, h, w), _pure.kernel_sums(p, q, h, w),
                               rtol=1e-12, atol=1e-300)


@needs_ext
@given(st.lists(st.floats(-1.0, 1.0), max_size=80), st.integers(1, 10))
def test_leaf_counts_parity(z, depth):
    z = np.array(z, dtype=np.float64)
    np.testing.assert_array_equal(_speedups.leaf_counts(z, depth), _pure.leaf_counts(z, depth))


@needs_ext
def test_leaf_counts_edges_parity():
    for depth in range(1, 11):
        edges = -1.0 + np.arange((1 << depth) + 1) * 2.0 ** (1 - depth)
        z = np.concatenate([edges, np.nextafter(edges, -2), np.nextafter(edges, 2)])
        z = z[(z >= -1) & (z <= 1)]
        np.testing.assert_array_equal(_speedups.leaf_counts(z, depth), _pure.leaf_counts(z, depth))


@needs_ext
def test_leaf_counts_reject_out_of_range():
    for impl in (_speedups, _pure):
        with pytest.raises(ValueError):
            impl.leaf_counts(np.array([1.5]), 3)


@needs_ext
@given(st.integers(1, 10), st.integers(0, 2**31))
def test_tail_sums_parity(depth, seed):
    rng = np.random.default_rng(seed)
    levels = [rng.normal(size=1 << lev) for lev in range(1, depth + 1)]
    np.testing.assert_allclose(_speedups.tail_sums(levels, depth), _pure.tail_sums(levels, depth),
                               rtol=1e-12, atol=1e-9)
