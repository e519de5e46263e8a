import numpy as np
import pytest
from hypothesis import given, strategies as st

import ldp_expand as lx
from ldp_expand.discretize import operators_for
from ldp_expand.errors import AdmissibleRangeError
from ldp_expand.rate import _mu_prime

MATHIEU_GOLDEN_03 = (0.285536475104517, 0.0428302822520959, 0.951805048644368)


def test_gaussian_theta_equals_a(gaussian):
    assert abs(lx.solve_theta(gaussian, 1.0, n=64) - 1.0) < 1e-10
    rp = lx.rate_point(gaussian, 2.0, n=64)
    assert abs(rp.theta - 2.0) < 1e-10
    assert abs(rp.rate - 2.0) < 1e-10


def test_gaussian_rate_table_values(gaussian):
    table = lx.rate_table(gaussian, [0.5, 1.0, 2.0], n=64)
    rates = [p.rate for p in table.points]
    assert np.allclose(rates, [0.125, 0.5, 2.0], atol=1e-9)
    assert not table.failures
    thetas = [p.theta for p in table.points]
    assert all(b > a for a, b in zip(thetas, thetas[1:]))  # monotone tilt


def test_empty_table(gaussian):
    table = lx.rate_table(gaussian, [], n=64)
    assert table.points == () and table.failures == ()


def test_rate_near_mean_vanishes(gaussian):
    rp = lx.rate_point(gaussian, 1e-4, n=64)
    assert rp.rate < 1e-7


def test_out_of_range_reports_interval(gaussian):
    with pytest.raises(AdmissibleRangeError) as err:
        lx.solve_theta(gaussian, 100.0, n=64)
    assert "admissible" in str(err.value)
    table = lx.rate_table(gaussian, [1.0, 100.0], n=64)
    assert len(table.points) == 1 and len(table.failures) == 1


def test_duality_residual(mathieu):
    ops = operators_for(mathieu, 256)
    for a in (0.1, 0.3, 0.6):
        rp = lx.rate_point(mathieu, a, n=256)
        assert rp.duality_residual(ops.mu(rp.theta)) < 1e-10
        assert abs(_mu_prime(ops, rp.theta) - a) < 1e-10
        assert rp.curvature > 0


def test_mathieu_golden_triple(mathieu):
    rp = lx.rate_point(mathieu, 0.3, n=256)
    theta, rate, curv = MATHIEU_GOLDEN_03
    assert abs(rp.theta - theta) < 1e-9
    assert abs(rp.rate - rate) < 1e-10
    assert abs(rp.curvature - curv) < 1e-7


def test_rate_derivative_identity(mathieu):
    # dI/da = theta_a by convex duality
    h = 1e-4
    rp = lx.rate_point(mathieu, 0.3, n=256)
    up = lx.rate_point(mathieu, 0.3 + h, n=256)
    dn = lx.rate_point(mathieu, 0.3 - h, n=256)
    assert abs((up.rate - dn.rate) / (2 * h) - rp.theta) < 1e-6


def test_rate_convexity(gaussian):
    table = lx.rate_table(gaussian, np.linspace(0.2, 2.0, 7), n=64)
    rates = np.array([p.rate for p in table.points])
    a = np.array([p.a for p in table.points])
    dd = np.diff(np.diff(rates) / np.diff(a)) / np.diff(a[:-1])
    assert np.all(dd > -1e-10)


def test_chain_rate_matches_cosh(pm1_chain):
    rp = lx.rate_point(pm1_chain, 0.6)
    theta = np.arctanh(0.6)
    assert abs(rp.theta - theta) < 1e-10
    assert abs(rp.rate - (0.6 * theta - np.log(np.cosh(theta)))) < 1e-12


@given(st.floats(0.05, 1.9))
def test_duality_property_random_levels(a):
    gaussian = lx.gaussian_baseline()
    rp = lx.rate_point(gaussian, a, n=64)
    assert rp.rate >= -1e-12
    assert abs(rp.theta - a) < 1e-9
    assert abs(rp.rate - a * a / 2) < 1e-9


def test_bracket_expansion(gaussian):
    # admissible beyond the default theta_max through expand-by-doubling
    rp = lx.rate_point(gaussian, 10.0, n=64, theta_max=8.0)
    assert abs(rp.theta - 10.0) < 1e-9
