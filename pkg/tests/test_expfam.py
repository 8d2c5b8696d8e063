import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from dmfvi.expfam import (VARIANCE_FLOOR, GaussianParams, NaturalParams, bregman_divergence, clamp_variance,
                          gaussian_kl, log_partition, log_partition_grad, to_moment, to_natural)

means = st.floats(-10, 10, allow_nan=False)
log_vars = st.floats(np.log(1e-3), np.log(1e3))


def kl_quadrature(p, q):
    f = lambda x: stats.norm.pdf(x, p[0], np.sqrt(p[1])) * (
        stats.norm.logpdf(x, p[0], np.sqrt(p[1])) - stats.norm.logpdf(x, q[0], np.sqrt(q[1])))
    return integrate.quad(f, -np.inf, np.inf, epsabs=1e-12, epsrel=1e-12)[0]


def test_to_natural_examples():
    n = to_natural(GaussianParams(0.0, 1.0))
    assert (float(n.eta1), float(n.eta2)) == (0.0, -0.5)
    n = to_natural(GaussianParams(2.0, 4.0))
    assert np.isclose(n.eta1, 0.5) and np.isclose(n.eta2, -0.125)


def test_round_trip_vectorized():
    rng = np.random.default_rng(0)
    m = rng.uniform(-10, 10, 1000)
    v = np.exp(rng.uniform(np.log(1e-6), np.log(1e6), 1000))
    back = to_moment(to_natural(GaussianParams(m, v)))
    np.testing.assert_allclose(back.mean, m, rtol=1e-12, atol=0)
    np.testing.assert_allclose(back.variance, v, rtol=1e-12)


def test_invalid_params_rejected():
    with pytest.raises(ValueError):
        GaussianParams(0.0, 0.0)
    with pytest.raises(ValueError):
        GaussianParams(np.nan, 1.0)
    with pytest.raises(ValueError):
        NaturalParams(1.0, 0.0)


def test_log_partition_values():
    assert log_partition(NaturalParams(0.0, -0.5)) == pytest.approx(0.0, abs=1e-15)
    assert log_partition(NaturalParams(1.0, -0.5)) == pytest.approx(0.5, abs=1e-15)


def test_log_partition_domain_error():
    n = object.__new__(NaturalParams)
    object.__setattr__(n, "eta1", 0.0)
    object.__setattr__(n, "eta2", 0.5)
    with pytest.raises(ValueError):
        log_partition(n)


def test_log_partition_midpoint_convexity():
    rng = np.random.default_rng(1)
    a = to_natural(GaussianParams(rng.uniform(-10, 10, 1000), np.exp(rng.uniform(-7, 7, 1000))))
    b = to_natural(GaussianParams(rng.uniform(-10, 10, 1000), np.exp(rng.uniform(-7, 7, 1000))))
    mid = NaturalParams(0.5 * (a.eta1 + b.eta1), 0.5 * (a.eta2 + b.eta2))
    lhs = log_partition(mid)
    rhs = 0.5 * log_partition(a) + 0.5 * log_partition(b)
    assert np.all(lhs <= rhs + 1e-9 * (1 + np.abs(rhs)))


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(2)
    h = 1e-5
    for _ in range(200):
        n = to_natural(GaussianParams(rng.uniform(-3, 3), np.exp(rng.uniform(-1, 1))))
        g1, g2 = log_partition_grad(n)
        fd1 = (log_partition(NaturalParams(n.eta1 + h, n.eta2)) - log_partition(NaturalParams(n.eta1 - h, n.eta2))) / (2 * h)
        fd2 = (log_partition(NaturalParams(n.eta1, n.eta2 + h)) - log_partition(NaturalParams(n.eta1, n.eta2 - h))) / (2 * h)
        assert abs(fd1 - g1) <= 1e-6 * (1 + abs(g1))
        assert abs(fd2 - g2) <= 1e-6 * (1 + abs(g2))


def test_kl_examples_against_quadrature():
    assert gaussian_kl(GaussianParams(0.0, 1.0), GaussianParams(1.0, 1.0)) == pytest.approx(kl_quadrature((0, 1), (1, 1)), abs=1e-9)
    assert gaussian_kl(GaussianParams(0.0, 1.0), GaussianParams(1.0, 1.0)) == pytest.approx(0.5, abs=1e-12)
    val = gaussian_kl(GaussianParams(0.0, 2.0), GaussianParams(0.0, 1.0))
    assert val == pytest.approx(kl_quadrature((0, 2), (0, 1)), abs=1e-9)
    assert val == pytest.approx(0.153426, abs=1e-6)


def test_kl_random_against_quadrature():
    rng = np.random.default_rng(3)
    for _ in range(10):
        p = (rng.uniform(-2, 2), np.exp(rng.uniform(-1, 1)))
        q = (rng.uniform(-2, 2), np.exp(rng.uniform(-1, 1)))
        assert gaussian_kl(GaussianParams(*p), GaussianParams(*q)) == pytest.approx(kl_quadrature(p, q), abs=1e-8)


@settings(max_examples=200, deadline=None)
@given(means, log_vars, means, log_vars)
def test_bregman_equals_reversed_kl(m1, lv1, m2, lv2):
    lam = to_natural(GaussianParams(m1, np.exp(lv1)))
    lam2 = to_natural(GaussianParams(m2, np.exp(lv2)))
    b = bregman_divergence(lam, lam2)
    kl = gaussian_kl(to_moment(lam2), to_moment(lam))
    assert abs(b - kl) <= 1e-10 * (1 + abs(kl))
    assert b >= -1e-12 and kl >= 0


@settings(max_examples=100, deadline=None)
@given(means, log_vars)
def test_divergences_vanish_on_identical_arguments(m, lv):
    p = GaussianParams(m, np.exp(lv))
    assert gaussian_kl(p, p) == pytest.approx(0.0, abs=1e-15)
    n = to_natural(p)
    assert abs(bregman_divergence(n, n)) <= 1e-12 * (1 + abs(log_partition(n)))


@settings(max_examples=100, deadline=None)
@given(means, log_vars)
def test_round_trip_property(m, lv):
    p = GaussianParams(m, np.exp(lv))
    back = to_moment(to_natural(p))
    assert float(back.mean) == pytest.approx(m, rel=1e-12, abs=1e-300)
    assert float(back.variance) == pytest.approx(np.exp(lv), rel=1e-12)


def test_clamp_variance_counts():
    counter = {}
    out = clamp_variance(np.array([1e-20, 0.5, -1.0]), counter)
    np.testing.assert_array_equal(out, [VARIANCE_FLOOR, 0.5, VARIANCE_FLOOR])
    assert counter["variance_clamps"] == 2
