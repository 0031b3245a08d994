"""Gaussian mechanisms and their calibrations.

Three releases are privatised: the group proportions (scalar Gaussian noise),
the kernel density grids (a truncated Gaussian process with the kernel as
covariance) and the dyadic count trees (independent per-node noise). All
logarithms are natural.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from fairfed.core import FairFedError, PrivacyBudget, as_generator
from fairfed.kde import Lattice

EIGEN_FLOOR = -1e-10


class NonPositiveSigma(FairFedError, ValueError):
    pass


class EigenFailure(FairFedError):
    pass


def scalar_gauss(value, sigma, rng):
    """value + N(0, sigma^2)."""
    if not (sigma > 0):
        raise NonPositiveSigma(f"sigma must be positive, got {sigma}")
    return value + as_generator(rng).normal(0.0, sigma, size=np.shape(value))


def calib_scalar(n_s: int, budget: PrivacyBudget) -> float:
    """Noise std for a proportion over n_s records: 4 sqrt(2 ln(5/delta)) / (n_s eps)."""
    if n_s < 1:
        raise ValueError("n_s must be >= 1")
    return 4.0 * math.sqrt(2.0 * math.log(5.0 / budget.delta)) / (n_s * budget.epsilon)


def calib_gp(n_sa: int, budget: PrivacyBudget, h: float, d: int, C_K: float = 1.0) -> float:
    """GP multiplier for a kernel density over n_sa records: 8 sqrt(2 C_K ln(8/delta)) / (n_sa eps h^d)."""
    if n_sa < 1:
        raise ValueError("n_sa must be >= 1")
    return (8.0 * math.sqrt(2.0 * C_K * math.log(8.0 / budget.delta))
            / (n_sa * budget.epsilon * h**d))


def tree_variance(budget: PrivacyBudget, M: int) -> float:
    """Per-node noise variance (4 ln(1/delta)/eps + 2) / (eps / M)."""
    if M < 1:
        raise ValueError("M must be >= 1")
    eps = budget.epsilon
    return (4.0 * math.log(1.0 / budget.delta) / eps + 2.0) / (eps / M)


def calib_tree(budget: PrivacyBudget, M: int) -> float:
    """Per-node noise std, the square root of ``tree_variance``."""
    return math.sqrt(tree_variance(budget, M))


def cdp_sigma(n_min: int, budget: PrivacyBudget) -> float:
    """Vertical shift std for the single-server disparity curve: 2 sqrt(2 ln(1.25/delta)) / (n_min eps)."""
    if n_min < 1:
        raise ValueError("n_min must be >= 1")
    return 2.0 * math.sqrt(2.0 * math.log(1.25 / budget.delta)) / (n_min * budget.epsilon)


@dataclass(frozen=True)
class GpBasis:
    """Top eigenpairs of the lattice covariance C[i, j] = K((p_i - p_j) / h)."""

    lattice: Lattice
    h: float
    eigvals: np.ndarray  # descending, clipped at 0
    eigvecs: np.ndarray  # (lattice.size, k)
    clipped_mass: float  # total |negative eigenvalue| removed by clipping
    total_variance: float  # trace of the covariance

    @property
    def k(self) -> int:
        return int(self.eigvals.shape[0])


def lattice_covariance(lattice: Lattice, h: float) -> np.ndarray:
    p = lattice.points
    sq = np.sum(p * p, axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * p @ p.T, 0.0)
    return np.exp(-0.5 * d2 / (h * h))


def _eigh(cov):
    try:
        return np.linalg.eigh(cov)
    except np.linalg.LinAlgError:
        pass
    try:
        return np.linalg.eigh(cov + 1e-8 * np.eye(cov.shape[0]))
    except np.linalg.LinAlgError as exc:
        raise EigenFailure("covariance eigendecomposition did not converge") from exc


@lru_cache(maxsize=16)
def gp_basis(lattice: Lattice, h: float, k_eigen: int) -> GpBasis:
    """Cached truncated eigenbasis; depends only on (lattice, h, k)."""
    cov = lattice_covariance(lattice, h)
    vals, vecs = _eigh(cov)
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    neg = vals < 0
    clipped = float(-vals[neg].sum())
    vals = np.where(neg, 0.0, vals)
    k = min(int(k_eigen), lattice.size)
    ev, evec = vals[:k].copy(), np.ascontiguousarray(vecs[:, :k])
    ev.setflags(write=False)
    evec.setflags(write=False)
    return GpBasis(lattice, float(h), ev, evec, clipped, float(np.trace(cov)))


@dataclass(frozen=True)
class GpSample:
    """One drawn GP path, fixed once sampled.

    Lattice values are ``scale * sum_j coeffs_j sqrt(eigvals_j) eigvecs[:, j]``;
    off-lattice points are multilinearly interpolated.
    """

    basis: GpBasis
    coeffs: np.ndarray
    scale: float = 1.0

    @property
    def lattice(self) -> Lattice:
        return self.basis.lattice

    @property
    def eigvals(self) -> np.ndarray:
        return self.basis.eigvals

    @property
    def eigvecs(self) -> np.ndarray:
        return self.basis.eigvecs

    @property
    def values(self) -> np.ndarray:
        return self.scale * (self.basis.eigvecs @ (self.coeffs * np.sqrt(self.basis.eigvals)))

    def scaled(self, factor: float) -> "GpSample":
        return GpSample(self.basis, self.coeffs, self.scale * factor)

    def __call__(self, x) -> np.ndarray:
        return self.lattice.interpolate(self.values, x)


def sample_gp(lattice: Lattice, h: float, k_eigen: int, rng) -> GpSample:
    """Draw a zero-mean GP on ``lattice`` with covariance K((s - t) / h), truncated to k eigenpairs."""
    if lattice.size == 0:
        raise ValueError("empty lattice")
    basis = gp_basis(lattice, float(h), int(k_eigen))
    coeffs = as_generator(rng).standard_normal(basis.k)
    coeffs.setflags(write=False)
    return GpSample(basis, coeffs)
