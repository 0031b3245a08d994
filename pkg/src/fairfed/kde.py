"""Gaussian kernel, kernel density sums on a lattice, bandwidth cross-validation."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from fairfed import _kernels
from fairfed.core import Dataset, FairFedError, as_generator

DEFAULT_BANDWIDTHS = (0.05, 0.1, 0.15, 0.2, 0.3, 0.4)


class ZeroBandwidth(FairFedError, ValueError):
    pass


class InsufficientData(FairFedError):
    pass


@dataclass(frozen=True)
class KernelSpec:
    """Unnormalised Gaussian kernel ``scale * exp(-|u|^2 / 2)``; ``C_K`` is its sup."""

    kind: str = "gaussian"
    scale: float = 1.0

    def __post_init__(self):
        if self.kind != "gaussian":
            raise ValueError(f"unsupported kernel {self.kind!r}")
        if self.scale <= 0:
            raise ValueError("kernel scale must be positive")

    @property
    def C_K(self) -> float:
        return self.scale

    def __call__(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=np.float64)
        return self.scale * np.exp(-0.5 * np.sum(u * u, axis=-1))


GAUSSIAN = KernelSpec()


def kernel_eval(u):
    """K(u) = exp(-|u|^2 / 2); u's last axis is the coordinate axis."""
    return GAUSSIAN(u)


def _check_h(h):
    if not (h > 0):
        raise ZeroBandwidth(f"bandwidth must be positive, got {h}")


def kde_eval(points, query, h, n_divisor, kernel: KernelSpec = GAUSSIAN) -> float:
    """(1 / n_divisor) * sum_i h^-d K((X_i - query) / h)."""
    _check_h(h)
    if n_divisor <= 0:
        raise ValueError("n_divisor must be positive")
    query = np.atleast_1d(np.asarray(query, dtype=np.float64))
    points = np.asarray(points, dtype=np.float64).reshape(-1, query.shape[0])
    if points.shape[0] == 0:
        return 0.0
    d = query.shape[0]
    return float(np.sum(kernel((points - query) / h)) / (n_divisor * h**d))


def kde_many(points, queries, h, n_divisor, weights=None,
             kernel: KernelSpec = GAUSSIAN) -> np.ndarray:
    """Vectorised ``kde_eval`` over many queries.

    ``weights`` (n,) or (n, c) multiplies each point's kernel contribution, so
    one pass gives both the all-points and positives-only sums.
    """
    _check_h(h)
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    d = queries.shape[1]
    points = np.asarray(points, dtype=np.float64).reshape(-1, d)
    squeeze = weights is not None and np.ndim(weights) == 1
    if weights is None:
        w = np.ones((points.shape[0], 1))
        squeeze = True
    else:
        w = np.asarray(weights, dtype=np.float64).reshape(points.shape[0], -1)
    sums = _kernels.kernel_sums(points, queries, h, w)
    out = sums * (kernel.scale / (n_divisor * h**d))
    return out[:, 0] if squeeze else out


@dataclass(frozen=True)
class Lattice:
    """Regular grid with ``resolution`` points per axis covering [0, 1]^d inclusively."""

    resolution: int
    d: int

    @cached_property
    def axis(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.resolution)

    @cached_property
    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*([self.axis] * self.d), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    @property
    def size(self) -> int:
        return self.resolution**self.d

    def interpolate(self, values, x) -> np.ndarray:
        """Multilinear interpolation of lattice ``values`` at points ``x`` (clipped into [0,1]^d)."""
        grid = np.asarray(values, dtype=np.float64).reshape((self.resolution,) * self.d)
        interp = RegularGridInterpolator((self.axis,) * self.d, grid, method="linear")
        x = np.clip(np.atleast_2d(np.asarray(x, dtype=np.float64)), 0.0, 1.0)
        return interp(x)


@dataclass(frozen=True)
class DensityGrid:
    lattice: Lattice
    values: np.ndarray

    def __call__(self, x) -> np.ndarray:
        return self.lattice.interpolate(self.values, x)


def group_regression(train: Dataset, queries, a: int, h: float) -> np.ndarray:
    """Non-private ratio estimate of P(Y=1 | X=x, A=a) at ``queries``.

    Where the kernel mass underflows to zero the estimate is 1/2.
    """
    g = train.group(a)
    if len(g) == 0:
        raise InsufficientData(f"no training points in group {a}")
    w = np.column_stack([np.ones(len(g)), g.y.astype(np.float64)])
    sums = _kernels.kernel_sums(g.x, np.atleast_2d(queries), h, w)
    den, num = sums[:, 0], sums[:, 1]
    with np.errstate(invalid="ignore", divide="ignore"):
        eta = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.5)
    return eta


def cv_errors(train: Dataset, folds: int, candidate_h, rng=None) -> np.ndarray:
    """Mean held-out misclassification of the group-wise rule 1{eta_hat >= 1/2} per bandwidth."""
    if folds < 2:
        raise ValueError("folds must be >= 2")
    n = len(train)
    order = np.arange(n) if rng is None else as_generator(rng).permutation(n)
    chunks = np.array_split(order, folds)
    for c in chunks:
        a = train.a[c]
        if len(c) == 0 or a.min() == a.max():
            raise InsufficientData("a cross-validation fold lacks a sensitive group")
    errs = np.zeros(len(candidate_h))
    for k, held in enumerate(chunks):
        mask = np.ones(n, dtype=bool)
        mask[held] = False
        fit, test = train.subset(mask), train.subset(held)
        for i, h in enumerate(candidate_h):
            wrong = 0
            for a in (0, 1):
                t = test.group(a)
                pred = group_regression(fit, t.x, a, h) >= 0.5
                wrong += int(np.sum(pred != (t.y == 1)))
            errs[i] += wrong / len(test)
    return errs / folds


def cross_validate_bandwidth(train: Dataset, folds: int = 3,
                             candidate_h=DEFAULT_BANDWIDTHS, rng=None) -> float:
    """Bandwidth with the lowest cross-validated error; ties go to the larger h."""
    candidate_h = [float(h) for h in candidate_h]
    if not candidate_h:
        raise ValueError("candidate_h is empty")
    for h in candidate_h:
        if not (0.0 < h < 1.0):
            raise ValueError(f"candidate bandwidth {h} outside (0, 1)")
    if len(candidate_h) == 1:
        return candidate_h[0]
    errs = cv_errors(train, folds, candidate_h, rng)
    best = min(range(len(candidate_h)), key=lambda i: (errs[i], -candidate_h[i]))
    return candidate_h[best]
