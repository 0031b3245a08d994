"""Time the compiled kernels against the numpy fallback on pipeline-sized inputs.

Usage: python benchmarks/bench_kernels.py [--repeat R]
"""

import argparse
import timeit

import numpy as np

from fairfed import _pure

try:
    from fairfed import _speedups
except ImportError:
    _speedups = None


def cases(rng):
    pts = rng.random((2500, 2))
    lat = np.stack(np.meshgrid(*[np.linspace(0, 1, 30)] * 2, indexing="ij"), -1).reshape(-1, 2)
    w = np.ascontiguousarray(np.column_stack([np.ones(2500), rng.integers(0, 2, 2500)]), dtype=float)
    z = rng.uniform(-1, 1, 5000)
    levels = [rng.normal(size=1 << lev) for lev in range(1, 13)]
    return {
        "kernel_sums (2500 pts x 900 lattice)": lambda m: m.kernel_sums(pts, lat, 0.1, w),
        "leaf_counts (5000 z, M=12)": lambda m: m.leaf_counts(z, 12),
        "tail_sums (M=12)": lambda m: m.tail_sums(levels, 12),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    print(f"{'kernel':40s} {'python ms':>10s} {'cython ms':>10s} {'speedup':>8s}")
    for name, call in cases(rng).items():
        t_py = min(timeit.repeat(lambda: call(_pure), number=1, repeat=args.repeat)) * 1e3
        if _speedups is None:
            print(f"{name:40s} {t_py:10.2f} {'n/a':>10s} {'':>8s}")
            continue
        np.testing.assert_allclose(call(_speedups), call(_pure), rtol=1e-10, atol=1e-10)
        t_cy = min(timeit.repeat(lambda: call(_speedups), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:40s} {t_py:10.2f} {t_cy:10.2f} {t_py / t_cy:7.1f}x")


if __name__ == "__main__":
    main()
