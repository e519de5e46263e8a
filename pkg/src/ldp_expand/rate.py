"""Legendre-transform machinery: tail levels a -> tilts theta_a, rate values
I(a) = a theta_a - mu(theta_a), and curvatures I''(a) = 1 / mu''(theta_a)."""
from __future__ import annotations

from dataclasses import dataclass

from scipy.optimize import brentq

from .discretize import operators_for
from .errors import AdmissibleRangeError, ConvergenceError
from .model import ModelSpec
from .spectral import FD_STEP, spectral_mu_prime

DEFAULT_THETA_MAX = 8.0
# theta values at which mu'(theta) would overflow the semigroup scale
THETA_HARD_CAP = 64.0


@dataclass(frozen=True)
class RatePoint:
    """One point of the rate curve: level, tilt, rate value, curvature."""

    a: float
    theta: float
    rate: float
    curvature: float

    def duality_residual(self, mu_theta: float) -> float:
        return abs(self.rate + mu_theta - self.a * self.theta)


@dataclass(frozen=True)
class RateTable:
    points: tuple[RatePoint, ...]
    failures: tuple[tuple[float, str], ...] = ()


def _mu_prime(ops, theta: float) -> float:
    """Exact derivative of the discrete cumulant curve via the eigenpair;
    smooth in theta to near machine precision (unlike finite differences of
    the stiff eigenvalue itself)."""
    return spectral_mu_prime(ops, theta)


def _mu_second(ops, theta: float, h: float = FD_STEP) -> float:
    return (spectral_mu_prime(ops, theta + h) - spectral_mu_prime(ops, theta - h)) / (2.0 * h)


def solve_theta(spec: ModelSpec, a: float, *, n: int | None = None,
                theta_max: float = DEFAULT_THETA_MAX) -> float:
    """Unique tilt with mu'(theta_a) = a, by bracketed root finding plus a
    Newton polish.  The admissible range is the open interval
    (mu'(0), mu'(theta_max)), with the bracket expanded by doubling while the
    requested level remains out of reach."""
    ops = operators_for(spec, n)
    a = float(a)
    lo, hi = 0.0, float(theta_max)
    dlo = _mu_prime(ops, lo)
    dhi = _mu_prime(ops, hi)
    while dhi < a and hi < THETA_HARD_CAP:
        hi = min(2.0 * hi, THETA_HARD_CAP)
        dhi = _mu_prime(ops, hi)
    if not (dlo < a < dhi):
        raise AdmissibleRangeError(
            f"a={a:.6g} outside the admissible open range ({dlo:.6g}, {dhi:.6g}) "
            f"explored over theta in [0, {hi:.6g}]")

    theta = brentq(lambda th: _mu_prime(ops, th) - a, lo, hi, xtol=1e-13)
    for _ in range(2):
        d2 = _mu_second(ops, theta)
        if d2 <= 0.0:
            raise ConvergenceError(
                f"mu''({theta:.6g}) = {d2:.3e} is not positive: convexity condition violated")
        step = (_mu_prime(ops, theta) - a) / d2
        theta -= step
        if abs(step) < 1e-14 * max(1.0, abs(theta)):
            break
    resid = abs(_mu_prime(ops, theta) - a)
    if resid > 1e-10:
        raise ConvergenceError(f"mu'(theta_a) missed a by {resid:.3e} (> 1e-10)")
    return float(theta)


def rate_point(spec: ModelSpec, a: float, *, n: int | None = None,
               theta_max: float = DEFAULT_THETA_MAX) -> RatePoint:
    """Rate value and curvature at level a via the Legendre transform."""
    ops = operators_for(spec, n)
    theta = solve_theta(spec, a, n=n, theta_max=theta_max)
    mu = ops.mu(theta)
    d2 = _mu_second(ops, theta)
    if d2 <= 0.0:
        raise ConvergenceError(f"mu''({theta:.6g}) = {d2:.3e} is not positive")
    rate = a * theta - mu
    if rate < -1e-12:
        raise ConvergenceError(f"negative rate value {rate:.3e}")
    return RatePoint(a=float(a), theta=theta, rate=max(rate, 0.0), curvature=1.0 / d2)


def rate_table(spec: ModelSpec, a_list, *, n: int | None = None,
               theta_max: float = DEFAULT_THETA_MAX) -> RateTable:
    """Elementwise rate points; per-entry admissibility failures are collected
    rather than fatal."""
    points: list[RatePoint] = []
    failures: list[tuple[float, str]] = []
    for a in a_list:
        try:
            points.append(rate_point(spec, a, n=n, theta_max=theta_max))
        except AdmissibleRangeError as exc:
            failures.append((float(a), str(exc)))
    return RateTable(points=tuple(points), failures=tuple(failures))
