import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import comb
from scipy.stats import norm

import ldp_expand as lx
from ldp_expand.errors import (AdmissibilityError, AdmissibleRangeError,
                               FitError, SemigroupOverflowError)
from ldp_expand.expansion import TailCurve

SQRT_2PI = np.sqrt(2 * np.pi)


def binomial_tail(n_steps: int, a: float) -> float:
    """P(S_n >= a n) for a Rademacher walk (independent enumeration oracle)."""
    k_min = int(np.ceil((a * n_steps + n_steps) / 2 - 1e-12))
    total = sum(comb(n_steps, k, exact=True) for k in range(k_min, n_steps + 1))
    return total / 2**n_steps


# -- transform values --------------------------------------------------------

def test_mgf_at_zero_is_one(gaussian, frame):
    assert abs(lx.mgf(gaussian, frame, 0.0, 3.0, n=64) - 1.0) < 1e-10


def test_mgf_real_tilt(gaussian, frame):
    t, theta = 2.5, 1.2
    assert abs(lx.mgf(gaussian, frame, theta, t, n=64) - np.exp(t * theta**2 / 2)) < 1e-9


def test_mgf_imaginary_tilt_magnitude(gaussian, frame):
    val = lx.mgf(gaussian, frame, 1j, 1.0, n=64)
    assert abs(abs(val) - np.exp(-0.5)) < 1e-10


def test_mgf_log_mode_handles_overflow(gaussian, frame):
    with pytest.raises(SemigroupOverflowError):
        lx.mgf(gaussian, frame, 4.0, 200.0, n=64)
    logv = lx.mgf(gaussian, frame, 4.0, 200.0, n=64, log=True)
    assert abs(logv.real - 200.0 * 8.0) < 1e-6


def test_mgf_chain_is_cosh_power(pm1_chain, frame):
    val = lx.mgf(pm1_chain, frame, 0.4, 6)
    assert abs(val - np.cosh(0.4) ** 6) < 1e-12
    with pytest.raises(ValueError):
        lx.mgf(pm1_chain, frame, 0.4, 2.5)


# -- exact tails --------------------------------------------------------------

def test_gaussian_tail_matches_normal_sf(gaussian, frame):
    p = lx.exact_tail(gaussian, frame, 1.0, 16.0, n=64)
    assert abs(p - norm.sf(4.0)) / norm.sf(4.0) < 1e-6


def test_tail_rejects_nonpositive_time(gaussian, frame):
    with pytest.raises(ValueError):
        lx.exact_tail(gaussian, frame, 1.0, 0.0, n=64)
    with pytest.raises(ValueError):
        lx.exact_tail(gaussian, frame, 1.0, -3.0, n=64)


def test_chain_tail_matches_binomial(pm1_chain, frame):
    p = lx.exact_tail(pm1_chain, frame, 0.6, 10)
    assert p == pytest.approx(56 / 1024, rel=1e-9)
    assert abs(p - binomial_tail(10, 0.6)) / binomial_tail(10, 0.6) < 1e-9


def test_refinement_self_consistency(gaussian, frame):
    loose = lx.exact_tail(gaussian, frame, 1.0, 16.0, n=64, rel_tol=1e-4)
    tight = lx.exact_tail(gaussian, frame, 1.0, 16.0, n=64, rel_tol=1e-8)
    assert abs(loose - tight) / tight < 1e-4


def test_tail_curve_flattening_monotone(gaussian, frame):
    ts = [16.0 * 2 ** (k / 2) for k in range(9)]
    curve = lx.tail_curve(gaussian, frame, 1.0, ts, n=64)
    flat = curve.flattened()
    assert np.all(np.diff(flat) > 0)  # monotone convergence up to D0
    assert flat[-1] < 1 / SQRT_2PI
    for t, q in zip(curve.t, flat):
        oracle = np.sqrt(t) * np.exp(t / 2) * norm.sf(np.sqrt(t))
        assert abs(q - oracle) / oracle < 1e-9


# -- leading coefficient ------------------------------------------------------

def test_leading_coefficient_gaussian(gaussian, frame):
    d0 = lx.leading_coefficient(gaussian, frame, 1.0, n=64)
    assert abs(d0 - 1 / SQRT_2PI) < 1e-10
    d0 = lx.leading_coefficient(gaussian, frame, 2.0, n=64)
    assert abs(d0 - 1 / (2 * SQRT_2PI)) < 1e-10


def test_leading_coefficient_boundary_warning(gaussian, frame):
    with pytest.warns(UserWarning, match="boundary"):
        lx.leading_coefficient(gaussian, frame, 1e-3, n=64)


def test_leading_coefficient_nonreversible_flag(frame):
    spec = lx.gradient_drift_model()
    rho = lx.invariant_density(lx.build_generator(spec, lx.PeriodicGrid(128)))
    centered = lx.center_observable(spec, rho.rho)
    with pytest.warns(UserWarning, match="non-self-adjoint"):
        lx.leading_coefficient(centered, frame, 0.2, n=128)


def test_mathieu_leading_coefficient_golden(mathieu, frame):
    d0 = lx.leading_coefficient(mathieu, frame, 0.3, n=256)
    assert abs(d0 - 1.38269137327162) < 1e-8


# -- coefficient extraction ----------------------------------------------------

def mills_curve(a: float, ts) -> TailCurve:
    """Synthetic normalized-tail curve from the exact Gaussian law: the
    independent oracle for the fitter (no transform inversion involved)."""
    ts = np.asarray(ts, dtype=float)
    probs = norm.sf(a * np.sqrt(ts))
    rate = a * a / 2
    return TailCurve(a=a, t=tuple(ts), prob=tuple(probs),
                     normalized=tuple(probs * np.exp(rate * ts)))


def test_fit_recovers_mills_coefficients_from_oracle(gaussian, frame):
    # Mills series: sqrt(2 pi) e^{x^2/2} Phi-bar(x) = 1/x - 1/x^3 + 3/x^5 - ...
    ts = [16.0 * 2 ** (k / 2) for k in range(9)]
    curve = mills_curve(1.0, ts)
    fit = lx.extract_coefficients(gaussian, frame, 1.0, ts, order=6, n=64, curve=curve)
    d0 = 1 / SQRT_2PI
    assert abs(fit.coefficients[0] - d0) / d0 < 0.01
    assert abs(fit.coefficients[1] + d0) / d0 < 0.02
    assert abs(fit.coefficients[2] - 3 * d0) / (3 * d0) < 0.10
    assert fit.condition < 1e8


def test_fit_a2_second_coefficient(gaussian, frame):
    ts = [8.0 * 2 ** (k / 2) for k in range(9)]
    curve = mills_curve(2.0, ts)
    fit = lx.extract_coefficients(gaussian, frame, 2.0, ts, order=6, n=64, curve=curve)
    d1 = -1 / (8 * SQRT_2PI)
    assert abs(fit.coefficients[1] - d1) / abs(d1) < 0.02


def test_fit_from_inversion_matches_analytic(gaussian, frame):
    ts = [16.0 * 2 ** (k / 2) for k in range(9)]
    fit = lx.extract_coefficients(gaussian, frame, 1.0, ts, order=6, n=64)
    assert abs(fit.d0 - 1 / SQRT_2PI) / (1 / SQRT_2PI) < 0.01


def test_order_zero_fit_is_weighted_mean(gaussian, frame):
    ts = [16.0, 32.0, 64.0, 128.0, 192.0]
    curve = mills_curve(1.0, ts)
    fit = lx.extract_coefficients(gaussian, frame, 1.0, ts, order=0, n=64,
                                  curve=curve, residual_tol=0.2, check_leading=False)
    t_arr = np.asarray(ts)
    w = t_arr ** 0.5  # weights t^{(r+1)/2} with r=0
    basis = t_arr ** -0.5
    y = np.asarray(curve.normalized)
    expect = np.sum(w**2 * basis * y) / np.sum(w**2 * basis**2)
    assert fit.d0 == pytest.approx(expect, rel=1e-12)


def test_fit_d0_stability_against_extra_sample(gaussian, frame):
    ts = [16.0 * 2 ** (k / 2) for k in range(9)]
    fit = lx.extract_coefficients(gaussian, frame, 1.0, ts, order=6, n=64,
                                  curve=mills_curve(1.0, ts))
    ts2 = ts + [16.0 * 2 ** 4.5]
    fit2 = lx.extract_coefficients(gaussian, frame, 1.0, ts2, order=6, n=64,
                                   curve=mills_curve(1.0, ts2))
    assert abs(fit2.d0 - fit.d0) / fit.d0 < 0.005


def test_fit_rejects_narrow_span(gaussian, frame):
    with pytest.raises(FitError, match="factor 8"):
        lx.extract_coefficients(gaussian, frame, 1.0, [16.0, 20.0, 24.0, 28.0, 32.0, 40.0],
                                order=4, n=64)


def test_fit_rejects_ill_conditioned(gaussian, frame):
    ts = [16.0 * 2 ** (k / 2) for k in range(9)]
    with pytest.raises(FitError, match="condition|samples"):
        lx.extract_coefficients(gaussian, frame, 1.0, ts, order=14, n=64,
                                curve=mills_curve(1.0, ts))


# -- weak expectations ---------------------------------------------------------

def test_weak_expectation_zero_window(gaussian, frame):
    f = lx.gaussian_window(amplitude=0.0)
    assert lx.weak_expectation(gaussian, frame, f, 1.0, 16.0, n=64) == 0.0


def test_weak_expectation_one_sided_exponential(gaussian, frame):
    t, a, beta = 16.0, 1.0, 2.0
    f = lx.one_sided_exponential(beta)
    val = lx.weak_expectation(gaussian, frame, f, a, t, n=64)
    oracle = quad(lambda u: np.exp(-beta * u) * norm.pdf(u + a * t, scale=np.sqrt(t)),
                  0, 60)[0] * np.exp(a * a * t / 2)
    assert abs(val - oracle) / oracle < 1e-6


def test_weak_expectation_gaussian_window(gaussian, frame):
    t, a = 16.0, 1.0
    f = lx.gaussian_window(center=0.5, width=0.8)
    val = lx.weak_expectation(gaussian, frame, f, a, t, n=64)
    oracle = quad(lambda u: f(u) * norm.pdf(u + a * t, scale=np.sqrt(t)),
                  -40, 40)[0] * np.exp(a * a * t / 2)
    assert abs(val - oracle) / oracle < 1e-6


def test_weak_expectation_bump_window(gaussian, frame):
    t, a = 9.0, 0.8
    f = lx.bump_window(center=0.0, width=1.5)
    val = lx.weak_expectation(gaussian, frame, f, a, t, n=64)
    oracle = quad(lambda u: f(u) * norm.pdf(u + a * t, scale=np.sqrt(t)),
                  -1.5, 1.5)[0] * np.exp(a * a * t / 2)
    assert abs(val - oracle) / oracle < 1e-5


def test_weak_expectation_linearity(gaussian, frame):
    f1 = lx.one_sided_exponential(2.0)
    f3 = lx.one_sided_exponential(2.0, amplitude=3.0)
    v1 = lx.weak_expectation(gaussian, frame, f1, 1.0, 16.0, n=64)
    v3 = lx.weak_expectation(gaussian, frame, f3, 1.0, 16.0, n=64)
    assert abs(v3 - 3 * v1) < 1e-12 * max(1.0, abs(v3))


def test_weak_expectation_rejects_inadmissible(gaussian, frame):
    f = lx.one_sided_exponential(0.5)  # decay order 0.5 < theta_a = 1
    with pytest.raises(AdmissibilityError):
        lx.weak_expectation(gaussian, frame, f, 1.0, 16.0, n=64)


def test_weak_leading_term_is_flat(gaussian, frame):
    # leading-order fit over a t-grid is consistent with a k=0 term
    f = lx.gaussian_window(width=1.0)
    ts = np.array([25.0, 50.0, 100.0, 200.0])
    vals = np.array([lx.weak_expectation(gaussian, frame, f, 1.0, t, n=64) for t in ts])
    scaled = vals * np.sqrt(ts)
    spread = (scaled.max() - scaled.min()) / scaled.mean()
    assert spread < 0.05


def test_tail_curve_validates_probabilities():
    with pytest.raises(Exception):
        TailCurve(a=1.0, t=(4.0,), prob=(1.5,), normalized=(1.0,))


def test_leading_requires_positive_tilt(gaussian, frame):
    with pytest.raises((AdmissibleRangeError, Exception)):
        lx.leading_coefficient(gaussian, frame, -0.5, n=64)
