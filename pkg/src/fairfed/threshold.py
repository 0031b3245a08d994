"""Step two: turning calibration data into a private fairness threshold.

Federated path: every site bins its z-scores into a dyadic tree over [-1, 1],
adds Gaussian noise to every node and releases the tree. The server reads the
disparity curve off suffix (tail) sums on the grid ``tau_j = -1 + (j-1) 2^(1-M)``,
corrects it towards a non-increasing sequence and picks the smallest |tau|
whose disparity sits in the band ``alpha +- rho_star``.

Single-server path: the exact empirical disparity step function shifted once
by Gaussian noise, searched over its breakpoints.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from fairfed import _kernels
from fairfed.core import (
    FLAG_INFEASIBLE_BAND,
    FLAG_INFEASIBLE_JUMP,
    FLAG_NONPOSITIVE_COUNT,
    Dataset,
    FairFedError,
    MissingGroup,
    PrivacyBudget,
    as_generator,
)
from fairfed.federation import RegressionEstimate
from fairfed.privacy import calib_tree, cdp_sigma


class ZOutOfRange(FairFedError, ValueError):
    pass


class IndexOutOfRange(FairFedError, IndexError):
    pass


class DepthMismatch(FairFedError, ValueError):
    pass


class Selection(NamedTuple):
    tau: float
    flags: tuple[str, ...] = ()


# ---------------------------------------------------------------- z-scores

def z_values(eta, pi_a: float, a: int) -> np.ndarray:
    """2(2a-1) pi_a (eta - 1/2) with eta clamped to [0, 1]; result clamped to [-1, 1]."""
    eta = np.clip(np.asarray(eta, dtype=np.float64), 0.0, 1.0)
    return np.clip(2.0 * (2 * a - 1) * pi_a * (eta - 0.5), -1.0, 1.0)


@dataclass(frozen=True)
class ZScores:
    """Calibration z-scores of one site, split by sensitive group."""

    site_id: int
    z0: np.ndarray
    z1: np.ndarray

    def group(self, a: int) -> np.ndarray:
        return self.z1 if a == 1 else self.z0


def compute_z(calib: Dataset, est: RegressionEstimate, site_id: int = 0) -> ZScores:
    eta = est.eta(calib.x, calib.a)
    z = np.empty(len(calib))
    for a in (0, 1):
        m = calib.a == a
        z[m] = z_values(eta[m], float(est.pi[a]), a)
    return ZScores(site_id, z[calib.a == 0], z[calib.a == 1])


# ---------------------------------------------------------------- trees

def grid(M: int) -> np.ndarray:
    """Evaluation grid tau_j = -1 + (j-1) 2^(1-M), j = 1..2^M + 1."""
    return -1.0 + np.arange((1 << M) + 1) * 2.0 ** (1 - M)


@dataclass(frozen=True)
class NoisyTree:
    """Per-level node counts; ``clean[l-1]`` and ``noisy[l-1]`` hold the 2^l nodes of level l.

    Clean counts are kept for tests and debugging only; a released tree is
    ``noisy`` alone.
    """

    site_id: int
    a: int
    M: int
    clean: tuple[np.ndarray, ...]
    noisy: tuple[np.ndarray, ...]
    sigma: float

    def node(self, level: int, k: int, noisy: bool = True) -> float:
        src = self.noisy if noisy else self.clean
        return float(src[level - 1][k - 1])

    def total(self, noisy: bool = True) -> float:
        """N_{s,a}: sum of the two level-1 nodes."""
        src = self.noisy if noisy else self.clean
        return float(src[0][0] + src[0][1])

    def rows(self, include_clean: bool = False):
        """(site, a, level, k, [clean,] noisy) rows for CSV export."""
        for lev in range(1, self.M + 1):
            for k in range(1, (1 << lev) + 1):
                row = [self.site_id, self.a, lev, k]
                if include_clean:
                    row.append(int(self.clean[lev - 1][k - 1]))
                row.append(float(self.noisy[lev - 1][k - 1]))
                yield row


def clean_levels(z, M: int) -> tuple[np.ndarray, ...]:
    """Leaf histogram under the half-open rule, then parents as sums of children."""
    if M < 1:
        raise ValueError("M must be >= 1")
    z = np.asarray(z, dtype=np.float64).ravel()
    if z.size and not (np.all(z >= -1.0) and np.all(z <= 1.0)):
        raise ZOutOfRange("z-scores must lie in [-1, 1]")
    leaves = _kernels.leaf_counts(z, M)
    levels = [leaves]
    for _ in range(M - 1):
        child = levels[-1]
        levels.append(child[0::2] + child[1::2])
    return tuple(reversed(levels))


def build_tree(z, M: int, budget: PrivacyBudget, rng, *, noise: bool = True,
               site_id: int = 0, a: int = 0) -> NoisyTree:
    clean = clean_levels(z, M)
    sigma = calib_tree(budget, M)
    gen = as_generator(rng)
    noisy = []
    for lev, counts in enumerate(clean, start=1):
        vals = counts.astype(np.float64)
        if noise:
            vals = vals + gen.normal(0.0, sigma, size=1 << lev)
        vals.setflags(write=False)
        counts.setflags(write=False)
        noisy.append(vals)
    return NoisyTree(site_id, a, M, clean, tuple(noisy), sigma)


def cover_nodes(j: int, M: int) -> list[tuple[int, int]]:
    """Nodes (level, k) selected by the tail indicator for grid index j, read literally."""
    nodes = []
    for lev in range(1, M + 1):
        span = 1 << (M - lev)
        for k in range(1, (1 << lev) + 1):
            left = (k - 1) * span + 1
            parent_left = (math.ceil(k / 2) - 1) * 2 * span + 1
            if left >= j and parent_left < j:
                nodes.append((lev, k))
    return nodes


def tail_query(tree: NoisyTree, j: int, noisy: bool = True) -> float:
    """Count of z-scores at or above tau_j from the dyadic cover of leaves j..2^M.

    j = 1 is the whole population (the cover formula is empty there) and
    j = 2^M + 1 is the empty suffix.
    """
    M = tree.M
    if not (1 <= j <= (1 << M) + 1):
        raise IndexOutOfRange(f"grid index {j} outside 1..{(1 << M) + 1}")
    if j == (1 << M) + 1:
        return 0.0
    if j == 1:
        return tree.total(noisy)
    return float(sum(tree.node(lev, k, noisy) for lev, k in cover_nodes(j, M)))


def tails(tree: NoisyTree, noisy: bool = True) -> np.ndarray:
    """``tail_query`` at every grid index j = 1..2^M + 1 (vectorised)."""
    src = tree.noisy if noisy else tuple(c.astype(np.float64) for c in tree.clean)
    return _kernels.tail_sums(src, tree.M)


@dataclass
class DisparityCurve:
    grid: np.ndarray
    dd: np.ndarray
    dd_mono: np.ndarray | None = None
    omega: float | None = None
    flags: list[str] = field(default_factory=list)

    @property
    def M(self) -> int:
        return int(round(math.log2(len(self.grid) - 1)))


def dd_grid(trees: Sequence[tuple[NoisyTree, NoisyTree]], mu, noisy: bool = True) -> DisparityCurve:
    """mu-weighted site disparities Tail_1/N_1 - (N_0 - Tail_0)/N_0 on the grid.

    ``trees[s]`` is the (group 0, group 1) tree pair of site s.
    """
    mu = np.asarray(mu, dtype=np.float64)
    if len(trees) != mu.shape[0]:
        raise ValueError("one weight per site is required")
    depths = {t.M for pair in trees for t in pair}
    if len(depths) != 1:
        raise DepthMismatch(f"trees have depths {sorted(depths)}")
    M = depths.pop()
    flags = []
    dd = np.zeros((1 << M) + 1)
    for w, (t0, t1) in zip(mu, trees):
        tail0, tail1 = tails(t0, noisy), tails(t1, noisy)
        n0, n1 = tail0[0], tail1[0]
        if n0 <= 0 or n1 <= 0:
            flags.append(FLAG_NONPOSITIVE_COUNT)
        n0, n1 = (n0 if n0 > 0 else 1.0), (n1 if n1 > 0 else 1.0)
        dd += w * (tail1 / n1 - (n0 - tail0) / n0)
    return DisparityCurve(grid(M), dd, flags=flags)


# ---------------------------------------------------------------- monotone correction

def _non_increasing(g) -> bool:
    return bool(np.all(np.diff(g) <= 0))


def monotone_fit(g, omega: float):
    """Forward pass f_i = min(f_{i-1}, g_i + omega); None once f_i < g_i - omega."""
    if omega < 0:
        raise ValueError("omega must be >= 0")
    g = np.asarray(g, dtype=np.float64)
    if _non_increasing(g):
        return g.copy()
    f = np.empty_like(g)
    f[0] = g[0] + omega
    for i in range(1, len(g)):
        f[i] = min(f[i - 1], g[i] + omega)
        if f[i] < g[i] - omega:
            return None
    return f


def monotone_fit_relaxed(g, omega: float) -> np.ndarray:
    """Backward pass keeping each value within omega of g, pulled towards its right neighbour.

    The output need not be monotone.
    """
    if omega < 0:
        raise ValueError("omega must be >= 0")
    g = np.asarray(g, dtype=np.float64)
    if _non_increasing(g):
        return g.copy()
    hi = np.minimum(g + omega, 1.0)
    lo = np.maximum(g - omega, 0.0)
    f = np.empty_like(g)
    f[-1] = hi[-1]
    for i in range(len(g) - 2, -1, -1):
        f[i] = min(hi[i], max(lo[i], f[i + 1]))
    return f


def omega_tolerance(mu, M: int, budgets: Sequence[PrivacyBudget], n_calib,
                    eta_tol: float, C_omega: float) -> float:
    """C_omega sqrt(sum_s mu_s^2 M^4 ln(1/delta_s) ln(M/eta) / (n_s^2 eps_s^2))."""
    mu = np.asarray(mu, dtype=np.float64)
    n = np.asarray(n_calib, dtype=np.float64)
    eps = np.array([b.epsilon for b in budgets])
    log_inv_delta = np.array([math.log(1.0 / b.delta) for b in budgets])
    terms = mu**2 * M**4 * log_inv_delta * math.log(M / eta_tol) / (n**2 * eps**2)
    return float(C_omega * math.sqrt(terms.sum()))


# ---------------------------------------------------------------- selection

def _zero_index(grid_vals) -> int:
    return int(np.argmin(np.abs(grid_vals)))


def _min_abs_tau(candidates, grid_vals) -> int:
    """Index of the smallest |tau| among candidates; +tau wins a tie with -tau."""
    taus = grid_vals[candidates]
    return int(candidates[np.lexsort((-taus, np.abs(taus)))[0]])


def select_threshold(curve: DisparityCurve, alpha: float, rho_star: float) -> Selection:
    """Grid point of least |tau| whose corrected disparity magnitude is in [alpha - rho, alpha + rho].

    If no grid point lands in the band, scan outward from 0 in the direction
    that reduces the disparity and take the first point past the band; if the
    curve never gets past it, take the point closest to the band edge.
    Both fallbacks raise the InfeasibleBand flag.
    """
    if rho_star <= 0:
        raise ValueError("rho_star must be positive")
    dd = curve.dd_mono if curve.dd_mono is not None else curve.dd
    taus = curve.grid
    j0 = _zero_index(taus)
    if abs(dd[j0]) <= alpha:
        return Selection(0.0)
    feasible = np.flatnonzero((np.abs(dd) >= alpha - rho_star) & (np.abs(dd) <= alpha + rho_star))
    if feasible.size:
        return Selection(float(taus[_min_abs_tau(feasible, taus)]))
    sign = 1.0 if dd[j0] > 0 else -1.0
    # positive disparity falls as tau grows; negative disparity rises as tau shrinks
    path = np.arange(j0, len(taus)) if sign > 0 else np.arange(j0, -1, -1)
    past = np.flatnonzero(sign * dd[path] < alpha - rho_star)
    if past.size:
        return Selection(float(taus[path[past[0]]]), (FLAG_INFEASIBLE_BAND,))
    dist = np.abs(dd - sign * alpha)
    best = np.flatnonzero(dist == dist.min())
    return Selection(float(taus[_min_abs_tau(best, taus)]), (FLAG_INFEASIBLE_BAND,))


# ---------------------------------------------------------------- single-server path

@dataclass(frozen=True)
class StepCurve:
    """DD(tau) = #{z1 >= tau}/n1 - #{z0 <= tau}/n0 + w, a non-increasing step function."""

    z1: np.ndarray  # sorted
    z0: np.ndarray  # sorted
    w: float = 0.0

    @property
    def n1(self) -> int:
        return int(self.z1.shape[0])

    @property
    def n0(self) -> int:
        return int(self.z0.shape[0])

    @property
    def breakpoints(self) -> np.ndarray:
        return np.sort(np.concatenate([self.z1, self.z0]))

    def __call__(self, tau):
        tau = np.asarray(tau, dtype=np.float64)
        upper = self.n1 - np.searchsorted(self.z1, tau, side="left")
        lower = np.searchsorted(self.z0, tau, side="right")
        out = upper / self.n1 - lower / self.n0 + self.w
        return float(out) if out.ndim == 0 else out


def cdp_curve(z1, z0, budget: PrivacyBudget, rng, noise: bool = True) -> StepCurve:
    z1 = np.sort(np.asarray(z1, dtype=np.float64))
    z0 = np.sort(np.asarray(z0, dtype=np.float64))
    if z1.size == 0 or z0.size == 0:
        raise MissingGroup("both sensitive groups need calibration records")
    w = 0.0
    if noise:
        sigma = cdp_sigma(min(z1.size, z0.size), budget)
        w = float(as_generator(rng).normal(0.0, sigma))
    return StepCurve(z1, z0, w)


def cdp_curve_from_data(calib: Dataset, est: RegressionEstimate, budget: PrivacyBudget,
                        rng, noise: bool = True) -> StepCurve:
    z = compute_z(calib, est)
    # group-0 z already carries the sign flip, so #{z0 <= tau} counts the complementary indicator
    return cdp_curve(z.z1, z.z0, budget, rng, noise)


def cdp_select(curve: StepCurve, alpha: float) -> Selection:
    """Least-|tau| point with |DD(tau)| <= alpha, searched over the curve's jump locations.

    Jumps at group-1 scores take effect just above the score and jumps at
    group-0 scores just below it, so those one-ulp offsets are the candidates
    that realise the infimum of |tau|.
    """
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    v0 = curve(0.0)
    if abs(v0) <= alpha:
        return Selection(0.0)
    if v0 > alpha:
        cand = np.concatenate([curve.z0, np.nextafter(curve.z1, np.inf)])
        cand = np.unique(cand[cand > 0])
        vals = curve(cand)
        hit = np.flatnonzero(vals <= alpha)
        if hit.size and vals[hit[0]] >= -alpha:
            return Selection(float(cand[hit[0]]))
    else:
        cand = np.concatenate([curve.z1, np.nextafter(curve.z0, -np.inf)])
        cand = np.unique(cand[cand < 0])[::-1]
        vals = curve(cand)
        hit = np.flatnonzero(vals >= -alpha)
        if hit.size and vals[hit[0]] <= alpha:
            return Selection(float(cand[hit[0]]))
    cand = np.concatenate([[0.0], curve.z1, curve.z0,
                           np.nextafter(curve.z1, np.inf), np.nextafter(curve.z0, -np.inf)])
    vals = np.abs(curve(cand))
    best = np.flatnonzero(vals == vals.min())
    taus = cand[best]
    pick = best[np.lexsort((-taus, np.abs(taus)))[0]]
    return Selection(float(cand[pick]), (FLAG_INFEASIBLE_JUMP,))
