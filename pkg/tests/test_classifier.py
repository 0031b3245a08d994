import math

import numpy as np
import pytest

import oracles
from fairfed.classifier import (
    CrossFitClassifier,
    EmptyTestSet,
    FairClassifier,
    FunctionClassifier,
    NotSynthetic,
    bayes_oracle,
    cross_fit,
    d_fair,
    empirical_dd,
    evaluate,
    fair_bayes_rule,
    group_thresholds,
    misclassification,
    population_metrics,
)
from fairfed.core import Dataset, MissingGroup, RngStream
from fairfed.federation import RegressionEstimate
from fairfed.kde import Lattice


def _const_eta_est(e0, e1, pi1=0.3):
    lat = Lattice(2, 2)
    eta = np.array([[e0] * 4, [e1] * 4])
    return RegressionEstimate(np.array([1 - pi1, pi1]), None, eta, eta, None, lat, 0.2)


def test_thresholds_and_predict():
    assert group_thresholds(0.0, [0.7, 0.3]).tolist() == [0.5, 0.5]
    clf = FairClassifier(_const_eta_est(0.4, 0.7), 0.06)
    assert clf.thresholds[1] == pytest.approx(0.6)
    assert clf.thresholds[0] == pytest.approx(0.5 - 0.06 / 1.4)
    assert clf.predict([[0.5, 0.5], [0.5, 0.5]], [1, 0]).tolist() == [1, 0]


def test_cross_fit_labels():
    one = FairClassifier(_const_eta_est(0.9, 0.9), 0.0)
    zero = FairClassifier(_const_eta_est(0.1, 0.1), 0.0)
    x, a = np.full((10_000, 2), 0.5), np.zeros(10_000, dtype=int)
    assert cross_fit(one, one, x, a, RngStream(0)).min() == 1
    assert cross_fit(zero, zero, x, a, RngStream(0)).max() == 0
    assert cross_fit(one, zero, x, a, RngStream(0)).mean() == pytest.approx(0.5, abs=0.02)
    cf = CrossFitClassifier(FairClassifier(one.est, 0.1, flags=("A",)), FairClassifier(zero.est, 0.3, flags=("A", "B")))
    assert cf.tau == pytest.approx(0.2) and cf.flags == ("A", "B")


def test_metrics_examples():
    y = np.array([1, 0, 0, 1, 0, 0, 0, 1, 0, 0])
    test = Dataset(np.zeros((10, 1)), [0, 1] * 5, y)
    truth = FunctionClassifier(lambda x, a: y)
    assert misclassification(truth, test) == 0.0
    assert misclassification(FunctionClassifier(lambda x, a: 1 - y), test) == 1.0
    ones = FunctionClassifier(lambda x, a: 1.0)
    assert misclassification(ones, test) == pytest.approx(0.7)
    assert empirical_dd(ones, test) == 0.0
    assert empirical_dd(FunctionClassifier(lambda x, a: a), test) == 1.0
    with pytest.raises(EmptyTestSet):
        misclassification(ones, Dataset(np.zeros((0, 1)), [], []))
    with pytest.raises(MissingGroup):
        empirical_dd(ones, Dataset(np.zeros((2, 1)), [1, 1], [0, 1]))
    m = evaluate(ones, test)
    assert 0 <= m.misclassification <= 1 and -1 <= m.empirical_dd <= 1


def test_sampled_mode_is_seeded():
    test = Dataset(np.zeros((1000, 1)), [0, 1] * 500, [1, 0] * 500)
    half = FunctionClassifier(lambda x, a: 0.5)
    a = misclassification(half, test, RngStream(1), sample=True)
    assert a == misclassification(half, test, RngStream(1), sample=True)
    assert a == pytest.approx(0.5, abs=0.06) and misclassification(half, test) == 0.5


def test_bayes_oracle_against_quadrature(spec):
    base = bayes_oracle(spec, [0.01, 0.5], mc_n=200_000, rng=RngStream(0))
    # quadrature of the generator: risk 0.138345, intrinsic DD -0.075579
    assert oracles.bayes_risk() == pytest.approx(0.1383452923, abs=1e-8)
    assert oracles.intrinsic_dd() == pytest.approx(-0.0755793303, abs=1e-8)
    assert base.bayes_risk_unconstrained == pytest.approx(0.1383453, abs=0.003)
    assert base.intrinsic_dd == pytest.approx(-0.0755793, abs=0.01)
    assert base.tau_for(0.5) == 0.0 and base.fair_bayes_risk[1] == base.bayes_risk_unconstrained
    tau = base.tau_for(0.01)
    assert tau < 0
    dd_at_tau = oracles.positive_rate(1, tau) - oracles.positive_rate(0, tau)
    assert dd_at_tau == pytest.approx(-0.01, abs=0.01)
    assert base.fair_bayes_risk[0] >= base.bayes_risk_unconstrained


def test_bayes_oracle_alpha_zero(spec):
    base = bayes_oracle(spec, 0.0, mc_n=100_000, rng=RngStream(1))
    _, dd, _ = population_metrics(fair_bayes_rule(spec, base.tau_star[0]), spec, 200_000, RngStream(2))
    assert abs(dd) < 0.01


def test_not_synthetic():
    with pytest.raises(NotSynthetic):
        bayes_oracle(object(), 0.1, mc_n=10)
    with pytest.raises(NotSynthetic):
        d_fair(FunctionClassifier(lambda x, a: 1.0), object(), 0.0)


class ToyGen:
    """X ~ U(0, 1), A ~ Bernoulli(1/2), eta_a(x) = x."""

    pi1 = 0.5

    def eta(self, x, a):
        return np.atleast_2d(x)[:, 0]

    def sample(self, n, rng):
        g = RngStream(0).generator() if rng is None else rng.generator()
        x = g.random((n, 1))
        a = g.random(n) < 0.5
        return Dataset(x, a, g.random(n) < x[:, 0])


def test_d_fair_toy_matches_quadrature():
    expected = oracles.toy_d_fair_const_one(0.1)
    assert expected == pytest.approx(0.26)
    res = d_fair(FunctionClassifier(lambda x, a: 1.0), ToyGen(), 0.1, mc_n=200_000, rng=RngStream(3))
    assert abs(res.value - expected) <= 2 * res.se


def test_d_fair_of_oracle_rule_is_zero(spec):
    rule = fair_bayes_rule(spec, -0.02)
    res = d_fair(rule, spec, -0.02, mc_n=50_000, rng=RngStream(4))
    assert res.value == 0.0


def test_d_fair_nonnegative_for_random_rules(spec):
    for seed in range(5):
        shift = np.random.default_rng(seed).normal(0, 0.1, 2)
        clf = FunctionClassifier(lambda x, a, s=shift: (spec.eta(x, a) >= 0.5 + s[a.astype(int)]).astype(float))
        res = d_fair(clf, spec, -0.02, mc_n=50_000, rng=RngStream(seed))
        assert res.value >= -3 * res.se


def test_threshold_monotonicity(synth):
    test = synth(2000, seed=9)
    lat = Lattice(5, 2)
    eta = np.random.default_rng(0).random((2, lat.size))
    est = RegressionEstimate(np.array([0.7, 0.3]), None, eta, eta, None, lat, 0.2)
    base = FairClassifier(est, 0.0).proba(test.x, test.a)
    for tau in (0.05, 0.1, 0.2):
        p = FairClassifier(est, tau).proba(test.x, test.a)
        assert np.all(p[test.a == 1] <= base[test.a == 1])
        assert np.all(p[test.a == 0] >= base[test.a == 0])
