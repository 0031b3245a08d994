"""Plug-in fair classifiers, evaluation metrics and Monte Carlo oracles."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from fairfed.core import Dataset, FairFedError, MissingGroup, as_generator
from fairfed.federation import RegressionEstimate


class EmptyTestSet(FairFedError):
    pass


class NotSynthetic(FairFedError, TypeError):
    pass


def group_thresholds(tau: float, pi) -> np.ndarray:
    """T_a = 1/2 + tau (2a - 1) / (2 pi_a) for a = 0, 1."""
    pi = np.asarray(pi, dtype=np.float64)
    return 0.5 + tau * np.array([-1.0, 1.0]) / (2.0 * pi)


@dataclass(frozen=True)
class FairClassifier:
    est: RegressionEstimate
    tau: float
    mode: str = "fdp"
    flags: tuple[str, ...] = ()

    @property
    def thresholds(self) -> np.ndarray:
        return group_thresholds(self.tau, self.est.pi)

    def proba(self, x, a) -> np.ndarray:
        a = np.asarray(a)
        eta = self.est.eta(x, a)
        return (eta >= self.thresholds[a.astype(np.intp)]).astype(np.float64)

    def predict(self, x, a) -> np.ndarray:
        return self.proba(x, a).astype(np.int8)


@dataclass(frozen=True)
class CrossFitClassifier:
    """Average of two classifiers fitted with the train/calibration halves swapped."""

    first: FairClassifier
    second: FairClassifier

    @property
    def tau(self) -> float:
        return 0.5 * (self.first.tau + self.second.tau)

    @property
    def flags(self) -> tuple[str, ...]:
        return tuple(dict.fromkeys(self.first.flags + self.second.flags))

    def proba(self, x, a) -> np.ndarray:
        return 0.5 * (self.first.proba(x, a) + self.second.proba(x, a))

    def predict(self, x, a, rng) -> np.ndarray:
        p = self.proba(x, a)
        return (as_generator(rng).random(p.shape[0]) < p).astype(np.int8)


def cross_fit(clf1: FairClassifier, clf2: FairClassifier, x, a, rng) -> np.ndarray:
    """Labels drawn from Bernoulli((f1 + f2) / 2)."""
    return CrossFitClassifier(clf1, clf2).predict(x, a, rng)


class FunctionClassifier:
    """Wraps ``fn(x, a) -> P(Yhat = 1)`` so arbitrary rules can be scored."""

    def __init__(self, fn, flags=()):
        self.fn = fn
        self.flags = tuple(flags)

    def proba(self, x, a):
        return np.broadcast_to(np.asarray(self.fn(np.atleast_2d(x), np.asarray(a)),
                                          dtype=np.float64), (np.atleast_2d(x).shape[0],))


def _predictions(clf, data: Dataset, rng, sample: bool) -> np.ndarray:
    p = np.asarray(clf.proba(data.x, data.a), dtype=np.float64)
    if sample:
        return (as_generator(rng).random(p.shape[0]) < p).astype(np.float64)
    return p


def misclassification(clf, test: Dataset, rng=None, sample: bool = False) -> float:
    """P(Yhat != Y) on ``test``; probabilistic classifiers contribute their expectation unless ``sample``."""
    if len(test) == 0:
        raise EmptyTestSet("empty test set")
    p = _predictions(clf, test, rng, sample)
    y = test.y.astype(np.float64)
    return float(np.mean(p * (1 - y) + (1 - p) * y))


def empirical_dd(clf, test: Dataset, rng=None, sample: bool = False) -> float:
    """Positive-prediction rate in group 1 minus that in group 0."""
    n0, n1 = test.group_counts()
    if n0 == 0 or n1 == 0:
        raise MissingGroup("both sensitive groups must appear in the test set")
    p = _predictions(clf, test, rng, sample)
    return float(p[test.a == 1].mean() - p[test.a == 0].mean())


@dataclass(frozen=True)
class Metrics:
    misclassification: float
    empirical_dd: float
    d_fair: float | None = None
    flags: tuple[str, ...] = ()


def evaluate(clf, test: Dataset, rng=None, sample: bool = False) -> Metrics:
    return Metrics(misclassification(clf, test, rng, sample),
                   empirical_dd(clf, test, rng, sample),
                   flags=tuple(getattr(clf, "flags", ())))


# ---------------------------------------------------------------- oracles

def _require_synthetic(gen):
    if not (callable(getattr(gen, "eta", None)) and hasattr(gen, "pi1")
            and callable(getattr(gen, "sample", None))):
        raise NotSynthetic("oracle quantities need a generator with a known eta and pi")


def fair_bayes_rule(gen, tau: float):
    """f*(x, a) = 1{eta_a(x) >= T_a(tau)} with the generator's true eta and pi."""
    pi = np.array([1.0 - gen.pi1, gen.pi1])
    thr = group_thresholds(tau, pi)

    def rule(x, a):
        a = np.asarray(a).astype(np.intp)
        return (gen.eta(x, a) >= thr[a]).astype(np.float64)

    return FunctionClassifier(rule)


@dataclass
class OracleBaseline:
    bayes_risk_unconstrained: float
    intrinsic_dd: float
    alphas: list[float] = field(default_factory=list)
    tau_star: list[float] = field(default_factory=list)
    fair_bayes_risk: list[float] = field(default_factory=list)
    mc_n: int = 0

    def tau_for(self, alpha: float) -> float:
        return self.tau_star[self.alphas.index(alpha)]


class _McSample:
    """A fixed Monte Carlo draw with the true regression values attached."""

    def __init__(self, gen, n, rng):
        data = gen.sample(n, rng)
        self.data = data
        self.eta = np.asarray(gen.eta(data.x, data.a), dtype=np.float64)
        self.is1 = data.a == 1
        self.pi = np.array([1.0 - gen.pi1, gen.pi1])

    def dd(self, tau: float) -> float:
        thr = group_thresholds(tau, self.pi)
        pos = self.eta >= thr[self.data.a.astype(np.intp)]
        return float(pos[self.is1].mean() - pos[~self.is1].mean())

    def risk(self, tau: float) -> float:
        thr = group_thresholds(tau, self.pi)
        f = (self.eta >= thr[self.data.a.astype(np.intp)]).astype(np.float64)
        return float(np.mean(f * (1 - self.eta) + (1 - f) * self.eta))


def _bisect_tau(mc: _McSample, target: float, lo: float, hi: float, tol: float):
    """Point where the non-increasing DD crosses ``target`` on [lo, hi]."""
    # keeps DD(lo) >= target > DD(hi)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mc.dd(mid) >= target:
            lo = mid
        else:
            hi = mid
    return lo, hi


def solve_tau_star(mc: _McSample, alpha: float, tol: float = 1e-4) -> float:
    dd0 = mc.dd(0.0)
    if abs(dd0) <= alpha:
        return 0.0
    # |tau*| <= min(pi_0, pi_1) <= 1/2; [-1, 1] brackets it
    if dd0 > alpha:
        lo, hi = _bisect_tau(mc, alpha, 0.0, 1.0, tol)
        return hi  # first point at or below alpha
    lo, hi = _bisect_tau(mc, -alpha, -1.0, 0.0, tol)
    return lo  # last point at or above -alpha


def bayes_oracle(gen, alpha, mc_n: int = 200_000, rng=None, tol: float = 1e-4) -> OracleBaseline:
    """Unconstrained Bayes risk, intrinsic disparity and fair thresholds by simulation.

    ``alpha`` may be a single level or a sequence of levels; one Monte Carlo
    sample serves all of them.
    """
    _require_synthetic(gen)
    alphas = [float(alpha)] if np.ndim(alpha) == 0 else [float(v) for v in alpha]
    mc = _McSample(gen, mc_n, rng)
    base = OracleBaseline(float(np.mean(np.minimum(mc.eta, 1 - mc.eta))), mc.dd(0.0), mc_n=mc_n)
    for al in alphas:
        tau = solve_tau_star(mc, al, tol)
        base.alphas.append(al)
        base.tau_star.append(tau)
        base.fair_bayes_risk.append(mc.risk(tau))
    return base


@dataclass(frozen=True)
class DFair:
    value: float
    se: float


def d_fair(clf, gen, tau_star: float, mc_n: int = 200_000, rng=None) -> DFair:
    """Fairness-aware excess risk 2 E[(f - f*)(T*_A - eta_A(X))] with its MC standard error."""
    _require_synthetic(gen)
    data = gen.sample(mc_n, rng)
    eta = np.asarray(gen.eta(data.x, data.a), dtype=np.float64)
    pi = np.array([1.0 - gen.pi1, gen.pi1])
    thr = group_thresholds(tau_star, pi)[data.a.astype(np.intp)]
    f_star = (eta >= thr).astype(np.float64)
    f = np.asarray(clf.proba(data.x, data.a), dtype=np.float64)
    terms = 2.0 * (f - f_star) * (thr - eta)
    return DFair(float(terms.mean()), float(terms.std(ddof=1) / math.sqrt(mc_n)))


def population_metrics(clf, gen, mc_n: int = 200_000, rng=None):
    """(risk, DD, risk standard error) of ``clf`` under the generator's true eta."""
    _require_synthetic(gen)
    data = gen.sample(mc_n, rng)
    eta = np.asarray(gen.eta(data.x, data.a), dtype=np.float64)
    f = np.asarray(clf.proba(data.x, data.a), dtype=np.float64)
    loss = f * (1 - eta) + (1 - f) * eta
    is1 = data.a == 1
    return (float(loss.mean()), float(f[is1].mean() - f[~is1].mean()),
            float(loss.std(ddof=1) / math.sqrt(mc_n)))


def collect_flags(classifiers: Sequence) -> tuple[str, ...]:
    out = []
    for c in classifiers:
        out.extend(getattr(c, "flags", ()))
    return tuple(dict.fromkeys(out))
