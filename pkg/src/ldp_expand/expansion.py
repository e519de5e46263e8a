"""Tail expansion machinery.

The normalized tail e^{I(a) t} P(S_t >= a t) is computed by quadrature of the
transform along the vertical saddle line Re z = theta_a:

    P(S_t >= a t) = (1/2 pi) int  E[e^{(theta+is) S_t}]
                                  e^{-(theta+is) a t} / (theta + i s)  ds,

evaluated in log-domain (growth factored out through mu(theta)), with the
trapezoid step halved and the truncation span doubled until the value is
stable to the requested relative tolerance.  Lattice-valued chains replace
the 1/(theta+is) factor by the lattice summation kernel and integrate one
period.  Higher coefficients come from a weighted least-squares fit of the
normalized tail against the basis t^{-(k+1/2)}; the leading coefficient has
an independent closed form from the spectral data.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .discretize import operators_for
from .errors import (AdmissibilityError, AdmissibleRangeError, ConvergenceError,
                     FitError, SemigroupOverflowError)
from .model import EvaluationFrame, ModelSpec
from .rate import RatePoint, rate_point

DEFAULT_REL_TOL = 1e-6
MAX_ROUNDS = 14
FIT_CONDITION_CAP = 1e8
# warn when theta_a is close enough to 0 that the 1/theta_a prefactor blows up
BOUNDARY_THETA = 0.05

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(96)


@dataclass(frozen=True)
class TailCurve:
    """Tail probabilities and their normalized values over a time grid."""

    a: float
    t: tuple[float, ...]
    prob: tuple[float, ...]
    normalized: tuple[float, ...]  # e^{I(a) t} P(S_t >= a t)

    def __post_init__(self):
        for t, p, q in zip(self.t, self.prob, self.normalized):
            if not 0.0 < p < 1.0:
                raise ConvergenceError(f"tail probability {p:.3e} at t={t} is outside (0, 1)")
            if q <= 0.0:
                raise ConvergenceError(f"normalized tail {q:.3e} at t={t} is not positive")

    def flattened(self) -> np.ndarray:
        """sqrt(t) e^{I t} P, the sequence that converges to the leading coefficient."""
        return np.sqrt(np.asarray(self.t)) * np.asarray(self.normalized)


@dataclass(frozen=True)
class CoeffFit:
    """Expansion coefficients fitted from a normalized tail curve."""

    a: float
    order: int
    coefficients: tuple[float, ...]
    residual: float
    condition: float

    @property
    def d0(self) -> float:
        return self.coefficients[0]


@dataclass(frozen=True)
class TestFunction:
    """Closed-form window from the admissible catalog.

    ``decay_alpha`` is the left-exponential order: use at level a requires
    decay_alpha > theta_a.  ``smoothness`` and ``moment_order`` are class
    metadata for the weighted-window spaces.
    """

    kind: str
    params: tuple[float, ...]
    amplitude: float = 1.0
    smoothness: float = np.inf
    decay_alpha: float = np.inf
    moment_order: int = 2

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "gaussian":
            c, w = self.params
            return self.amplitude * np.exp(-((x - c) ** 2) / (2.0 * w * w))
        if self.kind == "one_sided_exp":
            (beta,) = self.params
            return self.amplitude * np.exp(-beta * x) * (x >= 0.0)
        if self.kind == "bump":
            c, w = self.params
            u = (x - c) / w
            out = np.zeros_like(u)
            inside = np.abs(u) < 1.0
            out[inside] = np.exp(1.0 - 1.0 / (1.0 - u[inside] ** 2))
            return self.amplitude * out
        raise ValueError(f"unknown test function kind {self.kind!r}")

    def laplace(self, z: complex) -> complex:
        """Two-sided Laplace transform  int f(x) e^{-z x} dx."""
        if self.kind == "gaussian":
            c, w = self.params
            return self.amplitude * np.sqrt(2.0 * np.pi) * w * np.exp(-z * c + 0.5 * z * z * w * w)
        if self.kind == "one_sided_exp":
            (beta,) = self.params
            return self.amplitude / (beta + z)
        if self.kind == "bump":
            c, w = self.params
            u = _GL_NODES
            vals = np.exp(1.0 - 1.0 / (1.0 - u**2)) * np.exp(-z * (c + w * u))
            return self.amplitude * w * np.sum(_GL_WEIGHTS * vals)
        raise ValueError(f"unknown test function kind {self.kind!r}")

    def require_admissible(self, theta: float):
        if not self.decay_alpha > theta:
            raise AdmissibilityError(
                f"test function decay order {self.decay_alpha} must exceed theta_a={theta:.6g}")


def gaussian_window(center: float = 0.0, width: float = 1.0, amplitude: float = 1.0) -> TestFunction:
    return TestFunction(kind="gaussian", params=(float(center), float(width)),
                        amplitude=float(amplitude))


def one_sided_exponential(beta: float, amplitude: float = 1.0) -> TestFunction:
    """e^{-beta x} on x >= 0; discontinuous at 0, left-exponential of order beta."""
    return TestFunction(kind="one_sided_exp", params=(float(beta),),
                        amplitude=float(amplitude), smoothness=0, decay_alpha=float(beta))


def bump_window(center: float = 0.0, width: float = 1.0, amplitude: float = 1.0) -> TestFunction:
    return TestFunction(kind="bump", params=(float(center), float(width)),
                        amplitude=float(amplitude))


# ---------------------------------------------------------------------------
# Transform evaluation.

def mgf(spec: ModelSpec, frame: EvaluationFrame, z: complex, t: float, *,
        n: int | None = None, log: bool = False):
    """E_{x0}[e^{z S_t}] evaluated through the tilted semigroup.

    With ``log=True`` the complex logarithm is returned instead, which stays
    finite where the plain value would overflow.
    """
    ops = operators_for(spec, n)
    t = _check_time(ops, t)
    z = complex(z)
    mu_ref = ops.mu(z.real)
    val = complex(ops.nmgf(z, (t,), frame, mu_ref)[0])
    if val == 0:
        raise ConvergenceError("transform value underflowed to zero")
    log_m = np.log(val) + t * mu_ref
    if log:
        return log_m
    if log_m.real > 700.0:
        raise SemigroupOverflowError(
            f"Re log E[e^(zS_t)] = {log_m.real:.3g} would overflow; use log=True")
    return complex(np.exp(log_m))


def _check_time(ops, t) -> float | int:
    if t <= 0:
        raise ValueError(f"time horizon must be positive, got {t}")
    if ops.is_chain:
        steps = int(round(float(t)))
        if abs(t - steps) > 1e-9:
            raise ValueError(f"chain horizons are integer step counts, got {t}")
        return steps
    return float(t)


def exact_tail(spec: ModelSpec, frame: EvaluationFrame, a: float, t: float, *,
               n: int | None = None, rel_tol: float = DEFAULT_REL_TOL,
               max_rounds: int = MAX_ROUNDS) -> float:
    """P(S_t >= a t) by saddle-line transform inversion, certified by step
    halving and span doubling until the change is below ``rel_tol``."""
    rp = rate_point(spec, a, n=n)
    ops = operators_for(spec, n)
    t = _check_time(ops, t)
    normalized = _normalized_tail(ops, frame, rp, t, rel_tol, max_rounds)
    return float(normalized * np.exp(-rp.rate * t))


def tail_curve(spec: ModelSpec, frame: EvaluationFrame, a: float, t_list, *,
               n: int | None = None, rel_tol: float = DEFAULT_REL_TOL,
               max_rounds: int = MAX_ROUNDS) -> TailCurve:
    """Normalized tail over a time grid (transform data shared across times)."""
    rp = rate_point(spec, a, n=n)
    ops = operators_for(spec, n)
    ts, probs, normalized = [], [], []
    for t in t_list:
        t = _check_time(ops, t)
        q = _normalized_tail(ops, frame, rp, t, rel_tol, max_rounds)
        ts.append(float(t))
        normalized.append(q)
        probs.append(q * float(np.exp(-rp.rate * t)))
    return TailCurve(a=float(a), t=tuple(ts), prob=tuple(probs), normalized=tuple(normalized))


def _normalized_tail(ops, frame, rp: RatePoint, t, rel_tol, max_rounds) -> float:
    if ops.is_chain and ops.lattice() is not None:
        return _lattice_tail(ops, frame, rp, int(t), rel_tol, max_rounds)
    kernel = _IndicatorKernel(rp.theta)
    return _saddle_integral(ops, frame, rp, t, kernel, rel_tol, max_rounds)


class _IndicatorKernel:
    """Transform of the tail indicator along the saddle line: 1/(theta+is)."""

    def __init__(self, theta: float):
        self.theta = theta

    def __call__(self, s: float) -> complex:
        return 1.0 / complex(self.theta, s)


def _saddle_integral(ops, frame, rp: RatePoint, t, kernel, rel_tol, max_rounds) -> float:
    """(1/2 pi) int N(s) e^{-i s a t} kernel(s) ds with N the normalized
    transform; returns e^{I t} times the target expectation."""
    theta, a = rp.theta, rp.a
    mu_theta = ops.mu(theta)
    mu2 = 1.0 / rp.curvature
    width = 1.0 / np.sqrt(max(float(t) * mu2, 1e-12))
    h = float(2.0 ** np.floor(np.log2(width / 6.0)))
    S = 8.0 * width

    # one-eigenpair continuation is ~10x cheaper per tilt than the full
    # decomposition; certify its remainder against the full transform first
    use_top = (not ops.is_chain) and ops.certify_top_mode(
        theta, t, frame, 0.02 * rel_tol, (0.0, 4.0 * width, 8.0 * width))
    cache: dict[float, complex] = {}

    def F(s: float) -> complex:
        val = cache.get(s)
        if val is None:
            nm = None
            if use_top:
                top = ops.nmgf_top(complex(theta, s), (t,), frame, mu_theta)
                if top is not None:
                    nm = top[0]
            if nm is None:
                nm = ops.nmgf(complex(theta, s), (t,), frame, mu_theta)[0]
            val = nm * np.exp(-1j * s * a * t) * kernel(s)
            cache[s] = val
        return val

    def quadrature(h: float, S: float) -> tuple[float, float, float]:
        ks = range(int(np.ceil(S / h)) + 1)
        vals = [F(k * h) for k in ks]
        total = (h / (2.0 * np.pi)) * (vals[0].real + 2.0 * sum(v.real for v in vals[1:]))
        mags = [abs(v) for v in vals]
        return total, max(mags), mags[-1]

    prev = None
    for _ in range(max_rounds):
        for _ in range(48):
            Q, fmax, fboundary = quadrature(h, S)
            if fboundary <= 1e-3 * rel_tol * fmax or S > 1e6:
                break
            S *= 2.0
        if S > 1e6:
            raise ConvergenceError(
                "saddle-line integrand does not decay; inspect decay_profile for this model")
        if prev is not None and abs(Q - prev) <= rel_tol * max(abs(Q), 1e-300):
            if Q <= 0.0:
                raise ConvergenceError(f"inversion produced a nonpositive value {Q:.3e}")
            return float(Q)
        prev = Q
        h *= 0.5
    raise ConvergenceError(
        f"saddle-line inversion did not stabilize to {rel_tol:g} in {max_rounds} rounds; "
        "inspect decay_profile for this model")


def _lattice_tail(ops, frame, rp: RatePoint, n_steps: int, rel_tol, max_rounds) -> float:
    """One-period inversion for lattice-valued chains: the indicator transform
    is the lattice sum e^{-z m*}/(1 - e^{-z span});  the target level is the
    smallest lattice point >= a n."""
    span, base = ops.lattice()
    theta, a = rp.theta, rp.a
    mu_theta = ops.mu(theta)
    y = a * n_steps
    offset = base * n_steps
    j = np.ceil((y - offset) / span - 1e-9)
    m_star = offset + span * j
    pref = float(np.exp(-theta * (m_star - y)))
    period = 2.0 * np.pi / span
    cache: dict[float, complex] = {}

    def F(s: float) -> complex:
        val = cache.get(s)
        if val is None:
            z = complex(theta, s)
            nm = ops.nmgf(z, (n_steps,), frame, mu_theta)[0]
            val = nm * np.exp(-1j * s * m_star) / (1.0 - np.exp(-z * span))
            cache[s] = val
        return val

    m = 64
    prev = None
    for _ in range(max_rounds):
        step = period / m
        Q = float(np.mean([F(-np.pi / span + k * step).real for k in range(m)]))
        if prev is not None and abs(Q - prev) <= rel_tol * max(abs(Q), 1e-300):
            value = pref * Q
            if value <= 0.0:
                raise ConvergenceError(f"lattice inversion produced {value:.3e}")
            return value
        prev = Q
        m *= 2
    raise ConvergenceError(f"lattice inversion did not stabilize to {rel_tol:g}")


# ---------------------------------------------------------------------------
# Expansion coefficients.

def leading_coefficient(spec: ModelSpec, frame: EvaluationFrame, a: float, *,
                        n: int | None = None) -> float:
    """Analytic leading coefficient of the normalized tail:

        D_0 = ell(Pi_theta v) sqrt(I''(a)) / (theta_a sqrt(2 pi)),

    with ell(Pi v) = g(x0) <psi, v> under the pairing normalization."""
    rp = rate_point(spec, a, n=n)
    if rp.theta <= 0.0:
        raise AdmissibleRangeError(f"positive tilt required, got theta_a={rp.theta:.6g}")
    if rp.theta < BOUNDARY_THETA:
        warnings.warn(
            f"theta_a={rp.theta:.3g} is near the admissible boundary; the leading "
            "coefficient diverges as a approaches the mean slope", stacklevel=2)
    ops = operators_for(spec, n)
    ed = ops.eigendata(rp.theta)
    size = ed.g.size
    i0 = frame.index_on(size)
    v = frame.vector_on(size)
    ell_pi_v = float(ed.g[i0] * np.sum(ed.psi * v) * ops.weight)
    _warn_if_nonreversible(ops, ed, i0, v, ell_pi_v)
    return ell_pi_v * np.sqrt(rp.curvature) / (rp.theta * np.sqrt(2.0 * np.pi))


def _warn_if_nonreversible(ops, ed, i0, v, ell_pi_v):
    """The reversible-case shortcut g(x0) int g presumes psi proportional to
    g; flag models where that reading would disagree."""
    denom = float(np.sum(ed.g * ed.g) * ops.weight)
    psi_selfadjoint = ed.g / denom
    rel = float(np.max(np.abs(psi_selfadjoint - ed.psi)) / max(np.max(np.abs(ed.psi)), 1e-300))
    if rel > 1e-6:
        alt = float(ed.g[i0] * np.sum(psi_selfadjoint * v) * ops.weight)
        warnings.warn(
            "non-self-adjoint tilted operator: ell(Pi v) uses the left eigenvector "
            f"({ell_pi_v:.9g}); the reversible-case shortcut would give {alt:.9g}",
            stacklevel=3)


def extract_coefficients(spec: ModelSpec, frame: EvaluationFrame, a: float,
                         t_list, order: int = 4, *, n: int | None = None,
                         rel_tol: float = DEFAULT_REL_TOL,
                         curve: TailCurve | None = None,
                         residual_tol: float = 0.05,
                         check_leading: bool = True) -> CoeffFit:
    """Weighted least squares of the normalized tail against t^{-(k+1/2)}.

    Weights are proportional to t^{(order+1)/2} so the truncation remainder is
    equalized across samples.  The fitted D_0 must agree with the analytic
    leading coefficient within one percent.
    """
    n_coeff = order // 2 + 1
    t_arr = (np.asarray(curve.t) if curve is not None
             else np.asarray(sorted(float(t) for t in t_list), dtype=float))
    if t_arr.size < n_coeff + 2:
        raise FitError(f"need at least {n_coeff + 2} time samples for order {order}, got {t_arr.size}")
    if t_arr[-1] < 8.0 * t_arr[0]:
        raise FitError(
            f"time grid must span at least a factor 8 (got {t_arr[-1] / t_arr[0]:.3g}); widen the span")
    if curve is None:
        curve = tail_curve(spec, frame, a, t_arr, n=n, rel_tol=rel_tol)
    y = np.asarray(curve.normalized)
    basis = np.column_stack([t_arr ** -(k + 0.5) for k in range(n_coeff)])
    wts = t_arr ** ((order + 1) / 2.0)
    design = basis * wts[:, None]
    target = y * wts
    cond = float(np.linalg.cond(design))
    if cond > FIT_CONDITION_CAP:
        raise FitError(f"fit condition number {cond:.3e} exceeds {FIT_CONDITION_CAP:.0e}; "
                       "widen the time span")
    coeffs, *_ = np.linalg.lstsq(design, target, rcond=None)
    resid = float(np.linalg.norm(design @ coeffs - target) / np.linalg.norm(target))
    if resid > residual_tol:
        raise FitError(f"fit residual {resid:.3e} exceeds tolerance {residual_tol:g}")
    fit = CoeffFit(a=float(a), order=int(order), coefficients=tuple(float(c) for c in coeffs),
                   residual=resid, condition=cond)
    if fit.d0 <= 0.0:
        raise FitError(f"fitted leading coefficient {fit.d0:.3e} is not positive")
    if check_leading:
        d0_analytic = leading_coefficient(spec, frame, a, n=n)
        rel = abs(fit.d0 - d0_analytic) / abs(d0_analytic)
        if rel > 0.01:
            raise FitError(
                f"fitted D_0={fit.d0:.9g} disagrees with analytic {d0_analytic:.9g} "
                f"by {100 * rel:.2f}% (> 1%)")
    return fit


def weak_expectation(spec: ModelSpec, frame: EvaluationFrame, f: TestFunction,
                     a: float, t: float, *, n: int | None = None,
                     rel_tol: float = DEFAULT_REL_TOL,
                     max_rounds: int = MAX_ROUNDS) -> float:
    """e^{I(a) t} E[f(S_t - a t)] by the saddle-line inversion with the
    window transform replacing the indicator kernel."""
    if f.amplitude == 0.0:
        return 0.0
    rp = rate_point(spec, a, n=n)
    f.require_admissible(rp.theta)
    ops = operators_for(spec, n)
    t = _check_time(ops, t)
    kernel = _WindowKernel(rp.theta, f)
    return _saddle_integral(ops, frame, rp, t, kernel, rel_tol, max_rounds)


class _WindowKernel:
    """Two-sided Laplace transform of the window along the saddle line."""

    def __init__(self, theta: float, f: TestFunction):
        self.theta = theta
        self.f = f

    def __call__(self, s: float) -> complex:
        return self.f.laplace(complex(self.theta, s))
