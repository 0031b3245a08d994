"""Step one of the federated fit: private per-site estimates and their aggregation.

Each site releases noisy group proportions and noisy kernel density grids for
all records and for positives within each sensitive group. The server takes
``nu``-weighted sums and forms the regression estimate as a pointwise ratio
on the shared lattice.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from fairfed import _kernels
from fairfed.core import (
    FLAG_CLAMPED_ETA,
    FLAG_CLAMPED_PI,
    FLAG_DEGENERATE_DENSITY,
    Dataset,
    FairFedError,
    MissingGroup,
    PrivacyBudget,
    RngStream,
)
from fairfed.kde import GAUSSIAN, Lattice
from fairfed.privacy import calib_gp, calib_scalar, sample_gp, scalar_gauss

PI_FLOOR = 1e-6
DENSITY_FLOOR = 1e-8


class WeightMismatch(FairFedError, ValueError):
    pass


class InvalidTheoryParams(FairFedError, ValueError):
    pass


@dataclass(frozen=True)
class SiteEstimate:
    site_id: int
    pi_tilde: np.ndarray  # (2,), indexed by a
    px_grid: np.ndarray  # (2, L)
    pxy_grid: np.ndarray  # (2, L)
    lattice: Lattice
    n_train: int


@dataclass(frozen=True)
class RegressionEstimate:
    """Aggregated regression functions and group proportions.

    ``pi`` and ``eta_grid`` are the clamped copies used downstream; the raw
    values are kept for diagnostics.
    """

    pi: np.ndarray
    pi_raw: np.ndarray
    eta_grid: np.ndarray  # (2, L) clamped to [0, 1]
    eta_raw: np.ndarray
    px_grid: np.ndarray
    lattice: Lattice
    h: float
    flags: tuple[str, ...] = field(default=())

    def eta(self, x, a) -> np.ndarray:
        """Interpolated, clamped regression estimate at rows ``x`` for groups ``a``."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        a = np.broadcast_to(np.asarray(a), (x.shape[0],))
        out = np.empty(x.shape[0])
        for g in (0, 1):
            m = a == g
            if m.any():
                out[m] = self.lattice.interpolate(self.eta_grid[g], x[m])
        return np.clip(out, 0.0, 1.0)


@dataclass(frozen=True)
class TheoryParams:
    beta: float
    gamma: float

    def __post_init__(self):
        if not self.beta > 0 or self.gamma < 0:
            raise InvalidTheoryParams("need beta > 0 and gamma >= 0")


def site_estimate(train: Dataset, budget: PrivacyBudget, h: float, lattice: Lattice,
                  rng: RngStream, *, k_eigen: int = 35, noise: bool = True,
                  private_pi: bool = True, site_id: int = 0) -> SiteEstimate:
    """Noisy proportions and density grids for one site's training split."""
    n = len(train)
    counts = train.group_counts()
    if min(counts) == 0:
        raise MissingGroup(f"site {site_id} has an empty sensitive group")
    d = train.d
    pi = np.array(counts, dtype=np.float64) / n
    if noise and private_pi:
        sigma = calib_scalar(n, budget)
        pi = np.array([scalar_gauss(pi[a], sigma, rng.child("pi", a)) for a in (0, 1)])

    px = np.empty((2, lattice.size))
    pxy = np.empty((2, lattice.size))
    for a in (0, 1):
        g = train.group(a)
        n_sa = len(g)
        w = np.column_stack([np.ones(n_sa), g.y.astype(np.float64)])
        sums = _kernels.kernel_sums(g.x, lattice.points, h, w)
        sums *= GAUSSIAN.scale / (n_sa * h**d)
        px[a], pxy[a] = sums[:, 0], sums[:, 1]
        if noise:
            scale = calib_gp(n_sa, budget, h, d, GAUSSIAN.C_K)
            px[a] += scale * sample_gp(lattice, h, k_eigen, rng.child("gp", 1, a)).values
            pxy[a] += scale * sample_gp(lattice, h, k_eigen, rng.child("gp", 2, a)).values
    for arr in (pi, px, pxy):
        arr.setflags(write=False)
    return SiteEstimate(site_id, pi, px, pxy, lattice, n)


def aggregate(estimates, nu, h: float | None = None) -> RegressionEstimate:
    """Weighted central aggregation and pointwise ratio on the lattice."""
    estimates = list(estimates)
    nu = np.asarray(nu, dtype=np.float64)
    if len(estimates) != nu.shape[0] or not estimates:
        raise WeightMismatch(f"{len(estimates)} estimates but {nu.shape[0]} weights")
    lattice = estimates[0].lattice
    if any(e.lattice != lattice for e in estimates):
        raise WeightMismatch("site lattices are not aligned")
    flags = []
    pi_raw = sum(w * e.pi_tilde for w, e in zip(nu, estimates))
    px = sum(w * e.px_grid for w, e in zip(nu, estimates))
    pxy = sum(w * e.pxy_grid for w, e in zip(nu, estimates))
    if np.any(px <= DENSITY_FLOOR):
        flags.append(FLAG_DEGENERATE_DENSITY)
    eta_raw = pxy / np.maximum(px, DENSITY_FLOOR)
    eta = np.clip(eta_raw, 0.0, 1.0)
    if np.any(eta != eta_raw):
        flags.append(FLAG_CLAMPED_ETA)
    pi = np.clip(pi_raw, PI_FLOOR, 1.0 - PI_FLOOR)
    if np.any(pi != pi_raw):
        flags.append(FLAG_CLAMPED_PI)
    for arr in (pi, pi_raw, eta, eta_raw, px):
        arr.setflags(write=False)
    return RegressionEstimate(pi, pi_raw, eta, eta_raw, px, lattice,
                              float("nan") if h is None else float(h), tuple(flags))


def effective_weights(N, eps, h: float, d: int):
    """Weights proportional to the effective sample sizes min(N, N^2 eps^2 h^d) and min(N, N^2 eps^2)."""
    N = np.asarray(N, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if N.shape != eps.shape or np.any(N <= 0) or np.any(eps <= 0):
        raise ValueError("N and eps must be positive and of equal length")
    u = np.minimum(N, N**2 * eps**2 * h**d)
    u_prime = np.minimum(N, N**2 * eps**2)
    return tuple(u / u.sum()), tuple(u_prime / u_prime.sum())


def theoretical_bandwidth(S: int, N: int, eps: float, theory: TheoryParams, d: int,
                          fairness_active: bool) -> float:
    """Homogeneous-setting rate for the bandwidth with all constants set to 1."""
    beta, gamma = theory.beta, theory.gamma
    if fairness_active and gamma <= 0:
        raise InvalidTheoryParams("gamma must be positive when the fairness constraint binds")
    sn = S * N
    private_n = S * N**2 * eps**2
    h = sn ** (-(1 + gamma) / (2 * beta + d)) + private_n ** (-(1 + gamma) / (2 * beta + 2 * d))
    if fairness_active:
        expo = -(1 + gamma) / (2 * gamma * beta)
        h += sn**expo + private_n**expo
    return float(min(max(h, 1e-3), 0.99))


def select_depth(N, eps) -> int:
    """Tree depth max(floor(log2(sum min(N_s, N_s^2 eps_s^2))) + 1, 6)."""
    N = np.asarray(N, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if np.any(N <= 0) or np.any(eps <= 0):
        raise ValueError("N and eps must be positive")
    total = float(np.sum(np.minimum(N, N**2 * eps**2)))
    m = math.floor(math.log2(total))
    # guard against log2 rounding just below an exact power of two
    if 2 ** (m + 1) <= total:
        m += 1
    return max(m + 1, 6)


def rho_rate(N, eps, nu, mu, h: float, d: int, theory: TheoryParams) -> float:
    """Disparity-estimation error rate used for the selection band, constants set to 1.

    Diagnostic only: the pipeline takes the band half-width from the config.
    """
    N = np.asarray(N, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    nu = np.asarray(nu, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    reg = (math.sqrt(np.sum(nu**2 / (N * h**d))) + np.max(nu / (N * h**d)) + h**theory.beta
           + math.sqrt(np.sum(nu**2 / (N**2 * eps**2 * h ** (2 * d)))))
    thr = (math.sqrt(np.sum(mu**2 / N)) + np.max(mu / N)
           + math.sqrt(np.sum(mu**2 / (N**2 * eps**2))))
    return float(reg**theory.gamma + thr)
