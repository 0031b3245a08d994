"""End-to-end fits: split, private regression estimate, private threshold, classifier.

``fit`` does all the work that does not depend on the disparity level, so one
fitted pipeline can produce classifiers for a whole grid of ``alpha`` values.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from fairfed.classifier import CrossFitClassifier, FairClassifier, evaluate
from fairfed.core import (
    FLAG_MONOTONE_NULL,
    Dataset,
    FederationConfig,
    InvalidConfig,
    RngStream,
    SiteDataset,
    SplitSite,
    split_site,
)
from fairfed.federation import RegressionEstimate, aggregate, effective_weights, select_depth, site_estimate
from fairfed.kde import Lattice, cross_validate_bandwidth
from fairfed.threshold import (
    DisparityCurve,
    Selection,
    StepCurve,
    build_tree,
    cdp_curve_from_data,
    cdp_select,
    compute_z,
    dd_grid,
    monotone_fit,
    monotone_fit_relaxed,
    omega_tolerance,
    select_threshold,
)

MODES = ("fdp", "cdp")


@dataclass(frozen=True)
class HalfFit:
    """One train/calibration orientation, fitted up to the threshold search."""

    est: RegressionEstimate
    curve: DisparityCurve | StepCurve
    flags: tuple[str, ...] = ()


@dataclass(frozen=True)
class FittedPipeline:
    config: FederationConfig
    mode: str
    halves: tuple[HalfFit, ...]
    h: float
    nu: tuple[float, ...]
    mu: tuple[float, ...]
    M: int | None

    def select(self, half: HalfFit, alpha: float) -> Selection:
        if self.mode == "cdp":
            return cdp_select(half.curve, alpha)
        return select_threshold(half.curve, alpha, self.config.rho_star)

    def classifier(self, alpha: float | None = None):
        """Final classifier at ``alpha`` (the config's level by default)."""
        alpha = self.config.alpha if alpha is None else float(alpha)
        clfs = []
        for half in self.halves:
            sel = self.select(half, alpha)
            flags = tuple(dict.fromkeys(half.flags + sel.flags))
            clfs.append(FairClassifier(half.est, sel.tau, self.mode, flags))
        return clfs[0] if len(clfs) == 1 else CrossFitClassifier(*clfs)


def _as_stream(rng) -> RngStream:
    if isinstance(rng, RngStream):
        return rng
    if isinstance(rng, (int, np.integer)):
        return RngStream(int(rng))
    raise TypeError("rng must be an RngStream or an integer seed")


def _fdp_curve(splits: Sequence[SplitSite], est: RegressionEstimate, config: FederationConfig,
               mu, M: int, rng: RngStream) -> tuple[DisparityCurve, tuple[str, ...]]:
    trees = []
    for sp, b in zip(splits, config.budgets):
        z = compute_z(sp.calib, est, sp.site_id)
        trees.append(tuple(build_tree(z.group(a), M, b, rng.child("tree", sp.site_id, a),
                                      noise=config.noise, site_id=sp.site_id, a=a)
                           for a in (0, 1)))
    curve = dd_grid(trees, mu)
    curve.omega = omega_tolerance(mu, M, config.budgets, [sp.n_calib for sp in splits],
                                  config.eta_tol, config.C_omega)
    flags = list(curve.flags)
    mono = None
    if config.monotone == "strict":
        mono = monotone_fit(curve.dd, curve.omega)
        if mono is None:
            flags.append(FLAG_MONOTONE_NULL)
    if mono is None:
        mono = monotone_fit_relaxed(curve.dd, curve.omega)
    curve.dd_mono = mono
    return curve, tuple(flags)


def fit(config: FederationConfig, sites: Sequence[SiteDataset], mode: str = "fdp",
        rng=0) -> FittedPipeline:
    """Split every site, estimate the regression functions and build the disparity curves."""
    if mode not in MODES:
        raise InvalidConfig(f"mode must be one of {MODES}")
    sites = list(sites)
    if len(sites) != config.S:
        raise InvalidConfig(f"{len(sites)} sites but {config.S} budgets")
    if mode == "cdp" and config.S != 1:
        raise InvalidConfig("the single-server mode needs exactly one site")
    rng = _as_stream(rng)
    rule = "ceil" if mode == "fdp" else "floor"
    splits = [split_site(site, rng.child("split", s), rule) for s, site in enumerate(sites)]
    d = sites[0].data.d

    h = config.h
    if h is None:
        s_cv = int(rng.child("cv-site").generator().integers(len(splits)))
        h = cross_validate_bandwidth(splits[s_cv].train, config.cv_folds, config.cv_candidates,
                                     rng.child("cv"))
    N = [site.N for site in sites]
    eps = [b.epsilon for b in config.budgets]
    nu, mu = effective_weights(N, eps, h, d)
    nu = config.nu or nu
    mu = config.mu or mu
    M = None
    if mode == "fdp":
        M = config.M or select_depth(N, eps)

    lattice = Lattice(config.grid_resolution, d)
    orientations = [splits]
    if config.cross_fit:
        orientations.append([sp.swapped() for sp in splits])
    halves = []
    for o, parts in enumerate(orientations):
        rs = rng.child("fold", o)
        ests = [site_estimate(sp.train, b, h, lattice, rs.child("s1", sp.site_id),
                              k_eigen=config.k_eigen, noise=config.noise,
                              private_pi=config.private_pi, site_id=sp.site_id)
                for sp, b in zip(parts, config.budgets)]
        est = aggregate(ests, nu, h)
        if mode == "fdp":
            curve, flags = _fdp_curve(parts, est, config, mu, M, rs)
        else:
            curve = cdp_curve_from_data(parts[0].calib, est, config.budgets[0],
                                        rs.child("cdp"), config.noise)
            flags = ()
        halves.append(HalfFit(est, curve, tuple(dict.fromkeys(est.flags + flags))))
    return FittedPipeline(config, mode, tuple(halves), float(h), tuple(nu), tuple(mu), M)


def run_pipeline(config: FederationConfig, sites: Sequence[SiteDataset], mode: str = "fdp",
                 rng=0, test: Dataset | None = None):
    """Fit at ``config.alpha`` and score on ``test``.

    Without a test set the metrics are in-sample, over the pooled site data.
    """
    clf = fit(config, sites, mode, rng).classifier()
    if test is None:
        test = Dataset.concat([s.data for s in sites])
    return clf, evaluate(clf, test)

