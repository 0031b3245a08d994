import math

import numpy as np
import pytest

import oracles
from fairfed.core import Dataset, RngStream
from fairfed.datagen import SyntheticSpec
from fairfed.kde import (
    GAUSSIAN,
    InsufficientData,
    KernelSpec,
    Lattice,
    ZeroBandwidth,
    cross_validate_bandwidth,
    cv_errors,
    group_regression,
    kde_eval,
    kde_many,
    kernel_eval,
)


def test_kernel_values():
    assert kernel_eval(np.zeros(2)) == 1.0
    assert kernel_eval(np.array([1.0, 1.0])) == pytest.approx(math.exp(-1))
    u = np.random.default_rng(0).normal(size=(20, 3))
    np.testing.assert_array_equal(kernel_eval(u), kernel_eval(-u))
    assert GAUSSIAN.C_K == 1.0


def test_kde_point_mass_and_empty():
    x0 = np.array([0.3, 0.7])
    assert kde_eval([x0], x0, 0.5, 1) == pytest.approx(4.0)
    assert kde_eval(np.zeros((0, 2)), x0, 0.5, 5) == 0.0
    with pytest.raises(ZeroBandwidth):
        kde_eval([x0], x0, 0.0, 1)


def test_kde_matches_quadrature_oracle():
    pts = np.random.default_rng(1).random((10_000, 2))
    est = kde_eval(pts, [0.5, 0.5], 0.2, len(pts))
    # 6.128088... from 2-d quadrature of the scaled kernel over the unit square
    assert oracles.box_kernel_mass((0.5, 0.5), 0.2) == pytest.approx(6.128088512510638, rel=1e-9)
    assert est == pytest.approx(6.128088512510638, rel=0.05)


def test_kde_linear_in_points():
    rng = np.random.default_rng(2)
    p1, p2, q = rng.random((30, 2)), rng.random((17, 2)), rng.random((5, 2))
    both = kde_many(np.vstack([p1, p2]), q, 0.15, 10)
    np.testing.assert_allclose(both, kde_many(p1, q, 0.15, 10) + kde_many(p2, q, 0.15, 10), rtol=1e-12)
    assert np.all(both >= 0)


def test_kde_many_agrees_with_kde_eval():
    rng = np.random.default_rng(3)
    p, q = rng.random((40, 2)), rng.random((6, 2))
    many = kde_many(p, q, 0.2, 40)
    np.testing.assert_allclose(many, [kde_eval(p, qi, 0.2, 40) for qi in q], rtol=1e-12)
    w = rng.random((40, 2))
    two = kde_many(p, q, 0.2, 40, weights=w)
    assert two.shape == (6, 2)


def test_ratio_invariant_to_kernel_scale():
    rng = np.random.default_rng(4)
    p, q = rng.random((50, 2)), rng.random((8, 2))
    y = rng.random(50) < 0.4
    triple = KernelSpec(scale=3.0)
    r1 = kde_many(p[y], q, 0.2, 50) / kde_many(p, q, 0.2, 50)
    r3 = kde_many(p[y], q, 0.2, 50, kernel=triple) / kde_many(p, q, 0.2, 50, kernel=triple)
    np.testing.assert_allclose(r1, r3, rtol=1e-12)


def test_lattice_interpolation_exact_on_affine():
    lat = Lattice(7, 2)
    assert lat.size == 49 and lat.points[0].tolist() == [0, 0] and lat.points[-1].tolist() == [1, 1]
    vals = 2 * lat.points[:, 0] - lat.points[:, 1] + 0.5
    x = np.random.default_rng(5).random((20, 2))
    np.testing.assert_allclose(lat.interpolate(vals, x), 2 * x[:, 0] - x[:, 1] + 0.5, atol=1e-12)
    assert hash(lat) == hash(Lattice(7, 2))


def test_group_regression_half_on_underflow():
    train = Dataset([[0.0, 0.0], [0.1, 0.0]], [1, 1], [1, 0])
    out = group_regression(train, [[1.0, 1.0]], 1, 0.005)
    assert out[0] == 0.5
    with pytest.raises(InsufficientData):
        group_regression(train, [[0.5, 0.5]], 0, 0.1)


def test_cv_singleton_and_argmin():
    spec = SyntheticSpec()
    data = spec.sample(600, RngStream(0))
    assert cross_validate_bandwidth(data, candidate_h=[0.2]) == 0.2
    errs = cv_errors(data, 3, [0.05, 0.4], RngStream(1))
    best = cross_validate_bandwidth(data, 3, [0.05, 0.4], RngStream(1))
    assert best == [0.05, 0.4][int(np.argmin(errs))] or errs[0] == errs[1]


def test_cv_fold_without_group():
    data = Dataset(np.random.default_rng(0).random((6, 2)), [0, 0, 0, 0, 0, 1], [0, 1, 0, 1, 0, 1])
    with pytest.raises(InsufficientData):
        cross_validate_bandwidth(data, 3, [0.1, 0.2])


@pytest.mark.slow
def test_cv_choice_near_best_test_error():
    spec = SyntheticSpec()
    train = spec.sample(5000, RngStream(11).child("train"))
    test = spec.sample(4000, RngStream(11).child("test"))
    cands = [0.05, 0.1, 0.2, 0.4]
    errs = cv_errors(train, 3, cands, RngStream(11).child("cv"))
    chosen = cross_validate_bandwidth(train, 3, cands, RngStream(11).child("cv"))

    def test_err(h):
        wrong = 0
        for a in (0, 1):
            t = test.group(a)
            wrong += np.sum((group_regression(train, t.x, a, h) >= 0.5) != (t.y == 1))
        return wrong / len(test)

    best = min(test_err(h) for h in cands)
    assert errs[cands.index(chosen)] <= best + 0.02
