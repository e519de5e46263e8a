"""Tilted spectra: cumulant curve mu(theta), eigenfunctions, spectral gaps,
cumulant derivatives with an independent spectral cross-check, and the
complex-tilt diagnostics used by the condition suite.

Notation: G(theta) is the tilted generator, mu(theta) its rightmost
eigenvalue (the log of the time-1 Perron eigenvalue), g/psi the right/left
eigenvectors normalized by sup-norm one and bilinear pairing one, and
Pi = g (x) psi the rank-one spectral projector.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from ._eigen import spectrum, top_eigen_data
from .discretize import GeneratorMatrix, operators_for
from .errors import ConvergenceError, SolvabilityError
from .model import ModelSpec

# finite-difference step for d/dtheta of the cumulant curve, one Richardson level
FD_STEP = 1e-3
# spectral and finite-difference derivative values must agree this tightly
CROSSCHECK_RTOL = 5e-3


@dataclass(frozen=True)
class SpectralTriple:
    """(mu, g, psi, gap) of a tilted operator at one tilt.

    ``mu`` is on generator scale (log of the time-1 eigenvalue).  ``g`` has
    sup norm 1 and, for real tilts, is positive; ``psi`` satisfies
    sum(psi * g) * weight = 1.  ``gap`` is the distance from the top of the
    spectrum to the rest, in the same per-unit-time scale as mu.
    """

    z: complex
    mu: float | complex
    g: np.ndarray
    psi: np.ndarray
    gap: float
    residual: float
    weight: float

    def pair(self, values: np.ndarray) -> float | complex:
        """Bilinear pairing <psi, values>."""
        out = np.sum(self.psi * values) * self.weight
        return float(np.real(out)) if np.isrealobj(self.psi) and np.isrealobj(values) else out

    def projector(self) -> np.ndarray:
        """Rank-one spectral projector g (x) psi (with the pairing weight)."""
        return np.outer(self.g, self.psi) * self.weight


def _triple_from_ops(ops, z: complex) -> SpectralTriple:
    ed = ops.eigendata(z)
    mu = _to_mu(ops, ed.value)
    gap = _gap_mu_scale(ops, ed)
    return SpectralTriple(z=z, mu=mu, g=ed.g, psi=ed.psi, gap=gap,
                          residual=ed.residual, weight=ed.weight)


def _to_mu(ops, value):
    """Matrix-scale top eigenvalue -> per-unit-time cumulant value."""
    if ops.is_chain:
        return np.log(value) if np.iscomplexobj(np.asarray(value)) else float(np.log(value))
    return value


def _gap_mu_scale(ops, ed) -> float:
    if not ops.is_chain:
        return ed.gap
    # chain gap is measured between moduli of time-1 eigenvalues; report per step
    lam = abs(ed.value)
    rest = lam - ed.gap
    if rest <= 0.0:
        return np.inf
    return float(np.log(lam) - np.log(rest))


def top_eigen(G: GeneratorMatrix) -> SpectralTriple:
    """Top eigenpair of a tilted generator matrix.

    For real tilts the Perron pair is positive and mu is real; for complex
    tilts the eigenvalue of maximal real part is returned and simplicity is
    enforced through the configured gap threshold.
    """
    real = np.isrealobj(G.matrix) or abs(complex(G.z).imag) == 0.0
    ed = top_eigen_data(G.matrix, weight=G.grid.dx, sort="real", positive=real)
    return SpectralTriple(z=G.z, mu=ed.value, g=ed.g, psi=ed.psi, gap=ed.gap,
                          residual=ed.residual, weight=ed.weight)


def cgf(spec: ModelSpec, theta: float, *, n: int | None = None) -> float:
    """Cumulant generating function mu(theta) = log lambda(theta, 1)."""
    return operators_for(spec, n).mu(float(theta))


def spectral_triple(spec: ModelSpec, z: complex, *, n: int | None = None) -> SpectralTriple:
    """Cached SpectralTriple of the tilted operator at tilt z."""
    return _triple_from_ops(operators_for(spec, n), z)


@dataclass(frozen=True)
class DerivativeCrossCheck:
    """Finite-difference derivatives next to their spectral counterparts."""

    theta: float
    d1_fd: float
    d2_fd: float
    d1_spectral: float
    d2_spectral: float

    @property
    def d1_rel_err(self) -> float:
        return abs(self.d1_fd - self.d1_spectral) / max(abs(self.d1_fd), 1e-12)

    @property
    def d2_rel_err(self) -> float:
        return abs(self.d2_fd - self.d2_spectral) / max(abs(self.d2_fd), 1e-12)


def cgf_fd_derivatives(spec: ModelSpec, theta: float, *, n: int | None = None,
                       h: float = FD_STEP) -> tuple[float, float]:
    """Richardson-extrapolated central differences of the cumulant curve."""
    ops = operators_for(spec, n)
    m2, m1, m0, p1, p2 = (ops.mu(theta + k * h) for k in (-2, -1, 0, 1, 2))
    d1 = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * h)
    d2 = (-p2 + 16.0 * p1 - 30.0 * m0 + 16.0 * m1 - m2) / (12.0 * h * h)
    return d1, d2


def cgf_derivatives(spec: ModelSpec, theta: float, *, n: int | None = None) -> tuple[float, float]:
    """(mu'(theta), mu''(theta)) by finite differences, cross-checked against
    the stationary-drift and effective-diffusivity spectral formulas.

    Raises ConvergenceError when the two routes disagree beyond 0.5 percent,
    which flags a discretization or corrector failure.
    """
    check = cgf_derivative_crosscheck(spec, theta, n=n)
    scale1 = max(abs(check.d1_fd), abs(check.d2_fd), 1e-8)
    if abs(check.d1_fd - check.d1_spectral) > CROSSCHECK_RTOL * scale1:
        raise ConvergenceError(
            f"mu'({theta}) mismatch: finite differences {check.d1_fd:.10g} vs "
            f"spectral {check.d1_spectral:.10g}")
    if check.d2_rel_err > CROSSCHECK_RTOL:
        raise ConvergenceError(
            f"mu''({theta}) mismatch: finite differences {check.d2_fd:.10g} vs "
            f"effective diffusivity {check.d2_spectral:.10g}")
    return check.d1_fd, check.d2_fd


def cgf_derivative_crosscheck(spec: ModelSpec, theta: float, *,
                              n: int | None = None) -> DerivativeCrossCheck:
    ops = operators_for(spec, n)
    d1, d2 = cgf_fd_derivatives(spec, theta, n=n)
    if ops.is_chain:
        s1, s2 = _chain_spectral_derivatives(ops, theta)
    else:
        s1 = stationary_tilted_drift(ops, theta)
        s2, _, _, _ = effective_diffusivity_core(ops, theta)
    return DerivativeCrossCheck(theta=float(theta), d1_fd=d1, d2_fd=d2,
                                d1_spectral=s1, d2_spectral=s2)


# ---------------------------------------------------------------------------
# Spectral derivative formulas and the corrector.

def stationary_tilted_drift(ops, theta: float) -> float:
    """c_theta = integral of (b + theta sigma^2) against psi_theta g_theta;
    equals mu'(theta)."""
    _, g, psi = ops.perron(float(theta))
    pi = psi * g * ops.weight
    return float(np.sum((ops.b + theta * ops.sigma2) * pi))


def spectral_mu_prime(ops, theta: float) -> float:
    """mu'(theta) through first-order eigenvalue perturbation: the stationary
    tilted drift for diffusions, lambda'/lambda for chains."""
    theta = float(theta)
    if not ops.is_chain:
        return stationary_tilted_drift(ops, theta)
    ed = ops.eigendata(theta)
    lam = float(np.real(ed.value))
    drift = ops.m + theta * ops.var
    T1 = ops.tilted(theta) * drift[None, :]
    return float(ed.psi @ (T1 @ ed.g)) / lam


def tilted_x_generator(ops, theta: float) -> np.ndarray:
    """Generator of the tilted torus process: conjugation (1/g)(G - mu)(g .),
    whose continuum form is A + (V V^T)(grad log g) grad."""
    ed = ops.eigendata(float(theta))
    G = ops.tilted(float(theta))
    mu = float(np.real(ed.value))
    g = ed.g
    return (G * g[None, :] - mu * np.diag(g)) / g[:, None]


def solve_corrector(ops, theta: float) -> tuple[np.ndarray, float, float]:
    """Solve A~ f = c_theta - (b + theta sigma^2) on the grid.

    Returns (f, c_theta, residual).  Solvability holds because the right-hand
    side is orthogonal to the tilted invariant measure psi g; the solve pins
    the free constant by zero pi-mean.
    """
    theta = float(theta)
    ed = ops.eigendata(theta)
    pi = ed.psi * ed.g * ops.weight
    drift = ops.b + theta * ops.sigma2
    c_theta = float(np.sum(drift * pi))
    rhs = c_theta - drift
    ortho = float(np.sum(rhs * pi))
    if abs(ortho) > 1e-10 * max(1.0, float(np.max(np.abs(drift)))):
        raise SolvabilityError(f"corrector right-hand side not orthogonal to pi ({ortho:.3e})")
    At = tilted_x_generator(ops, theta)
    aug = np.vstack([At, pi[None, :]])
    rhs_aug = np.concatenate([rhs, [0.0]])
    f, *_ = np.linalg.lstsq(aug, rhs_aug, rcond=None)
    residual = float(np.max(np.abs(At @ f - rhs)))
    if residual > max(1e-8, 1e-8 * float(np.max(np.abs(rhs)))):
        raise SolvabilityError(f"corrector Poisson solve residual {residual:.3e} exceeds 1e-8")
    return f, c_theta, residual


def effective_diffusivity_core(ops, theta: float) -> tuple[float, np.ndarray, float, float]:
    """Xi(theta) = integral of |V grad f|^2 + sigma^2 against psi g, with f
    the corrector; equals mu''(theta).  Returns (xi, f, c_theta, residual)."""
    f, c_theta, residual = solve_corrector(ops, theta)
    ed = ops.eigendata(float(theta))
    pi = ed.psi * ed.g * ops.weight
    n = f.size
    fprime = (np.roll(f, -1) - np.roll(f, 1)) * (0.5 * n)
    xi = float(np.sum((ops.vv * fprime**2 + ops.sigma2) * pi))
    return xi, f, c_theta, residual


def _chain_spectral_derivatives(ops, theta: float) -> tuple[float, float]:
    """Exact eigenvalue-perturbation derivatives of log lambda for a chain."""
    theta = float(theta)
    ed = ops.eigendata(theta)
    lam = float(np.real(ed.value))
    g, psi = ed.g, ed.psi
    T = ops.tilted(theta)
    drift = ops.m + theta * ops.var
    T1 = T * drift[None, :]
    T2 = T * (drift**2 + ops.var)[None, :]
    lam1 = float(psi @ (T1 @ g))
    # dg/dtheta from (T - lam) gdot = (lam' - T') g, pinned by psi-orthogonality
    rhs = lam1 * g - T1 @ g
    aug = np.vstack([T - lam * np.eye(T.shape[0]), psi[None, :]])
    gdot, *_ = np.linalg.lstsq(aug, np.concatenate([rhs, [0.0]]), rcond=None)
    lam2 = float(psi @ (T2 @ g)) + 2.0 * float(psi @ (T1 @ gdot)) - 2.0 * lam1 * float(psi @ gdot)
    d1 = lam1 / lam
    d2 = lam2 / lam - d1 * d1
    return d1, d2


# ---------------------------------------------------------------------------
# Complex-tilt diagnostics.

def check_b3(spec: ModelSpec, theta: float, s_list, *, n: int | None = None) -> list[tuple[float, float]]:
    """Complex-tilt gap condition: for each s != 0 return
    mu(theta) - max Re spec(G(theta + i s)) (diffusions) or the log-modulus
    margin (chains); positive values certify the condition."""
    return b3_margins(operators_for(spec, n), theta, s_list)


def b3_margins(ops, theta: float, s_list) -> list[tuple[float, float]]:
    """Margins against the spectral envelope; defined through the spectral
    bound (not the Perron pair), so degenerate negative controls still
    produce reportable numbers."""
    theta = float(theta)
    w0 = spectrum(ops.tilted(theta))
    ref = float(np.log(np.max(np.abs(w0)))) if ops.is_chain else float(np.max(w0.real))
    out = []
    for s in s_list:
        s = float(s)
        if s == 0.0:
            raise ValueError("the complex-tilt gap condition is defined for s != 0 only")
        w = spectrum(ops.tilted(complex(theta, s)))
        top = float(np.log(np.max(np.abs(w)))) if ops.is_chain else float(np.max(w.real))
        out.append((s, ref - top))
    return out


@dataclass(frozen=True)
class DecayProfile:
    """Measured norm decay of the complex-tilted semigroup.

    ``samples`` holds (s, t, ratio) with ratio = ||exp(t G(theta+is))|| /
    exp(t mu(theta)) in the induced max-row-sum norm;  the fitted constants
    satisfy ratio <= (1 - epsilon)^floor(t) for every sample with |s| >= K.
    """

    theta: float
    samples: tuple[tuple[float, float, float], ...]
    K: float
    epsilon: float


def decay_profile(spec: ModelSpec, theta: float, s_grid, t_grid, *,
                  n: int | None = None) -> DecayProfile:
    """Sample semigroup norm ratios over (s, t) and fit (K, epsilon)."""
    s_grid, t_grid = list(s_grid), list(t_grid)
    if not s_grid or not t_grid:
        raise ValueError("decay profile needs nonempty s and t grids")
    ops = operators_for(spec, n)
    theta = float(theta)
    mu = ops.mu(theta)
    samples = []
    for s in sorted(float(s) for s in s_grid):
        for t in t_grid:
            t = float(t)
            M = _time_op_normalized(ops, complex(theta, s), t, mu)
            ratio = float(np.max(np.sum(np.abs(M), axis=1)))
            samples.append((s, t, ratio))
    K, eps = _fit_decay(samples)
    if eps is None:
        raise ConvergenceError(
            "no epsilon > 0 certifies geometric norm decay; the model numerically "
            "violates the complex-tilt decay condition")
    return DecayProfile(theta=theta, samples=tuple(samples), K=K, epsilon=eps)


def _time_op_normalized(ops, z: complex, t: float, mu_ref: float) -> np.ndarray:
    """exp(t (G(z) - mu_ref)) for diffusions; (T(z) e^{-mu_ref})^t for chains."""
    if ops.is_chain:
        steps = int(round(t))
        if abs(t - steps) > 1e-9 or steps < 0:
            raise ValueError(f"chain semigroup times must be nonnegative integers, got {t}")
        return np.linalg.matrix_power(ops.tilted(z) * np.exp(-mu_ref), steps)
    G = ops.tilted(z).astype(complex, copy=True)
    idx = np.arange(G.shape[0])
    G[idx, idx] -= mu_ref
    return sla.expm(t * G)


def _fit_decay(samples, eps_floor: float = 1e-9):
    svals = sorted({abs(s) for s, _, _ in samples})
    for K in svals:
        rates = [r ** (1.0 / max(1, int(np.floor(t))))
                 for s, t, r in samples if abs(s) >= K]
        if not rates:
            continue
        eps = 1.0 - max(rates)
        if eps > eps_floor:
            return K, eps
    return (svals[-1] if svals else 0.0), None


@dataclass(frozen=True)
class DecompositionReport:
    """Consistency of exp(tG) = e^{t mu} Pi + R(t) with a geometrically
    decaying, semigroup-forming remainder.  All norms are relative to the
    normalized semigroup scale e^{t Re mu}."""

    z: complex
    rows: tuple[dict, ...]
    power_residuals: tuple[tuple[int, float], ...]

    @property
    def remainder_decays(self) -> bool:
        norms = [r["remainder_norm"] for r in self.rows]
        floor = 64 * np.finfo(float).eps
        return all(b < max(0.95 * a, floor) for a, b in zip(norms, norms[1:]))


def decomposition_check(spec: ModelSpec, theta: float, s: float, t_list, *,
                        n: int | None = None) -> DecompositionReport:
    """Verify the rank-one + remainder decomposition of the tilted semigroup
    at z = theta + i s, including R(N t) = R(t)^N for N = 2, 3."""
    ops = operators_for(spec, n)
    z = complex(float(theta), float(s))
    ed = ops.eigendata(z if s else float(theta))
    proj = np.outer(ed.g, ed.psi) * ops.weight
    mu_ref = ops.mu(float(theta))

    rows = []
    t_sorted = sorted(float(t) for t in t_list)
    for t in t_sorted:
        Mt = _time_op_normalized(ops, z, t, mu_ref)
        top = np.exp((_log_time1(ops, ed.value) - mu_ref) * t) * proj
        R = Mt - top
        recon = _rowsum_norm(Mt - (top + R))
        rows.append({
            "t": t,
            "remainder_norm": _rowsum_norm(R),
            "reconstruction": recon,
            "projector_commutator": _rowsum_norm(proj @ R) + _rowsum_norm(R @ proj),
        })

    power_residuals = []
    if t_sorted:
        t0 = t_sorted[0]
        R0 = _remainder(ops, z, t0, mu_ref, proj, ed)
        for N in (2, 3):
            RN = _remainder(ops, z, N * t0, mu_ref, proj, ed)
            diff = _rowsum_norm(RN - np.linalg.matrix_power(R0, N))
            power_residuals.append((N, diff))
            if diff > 1e-8:
                raise ConvergenceError(
                    f"remainder semigroup property violated at N={N}: residual {diff:.3e}")
    report = DecompositionReport(z=z, rows=tuple(rows), power_residuals=tuple(power_residuals))
    if len(rows) > 1 and not report.remainder_decays:
        raise ConvergenceError("remainder norm does not decay geometrically in t")
    return report


def _rowsum_norm(M: np.ndarray) -> float:
    """Induced max-row-sum norm, the package's operator-norm proxy."""
    return float(np.max(np.sum(np.abs(M), axis=1)))


def _log_time1(ops, value):
    return np.log(complex(value)) if ops.is_chain else complex(value)


def _remainder(ops, z, t, mu_ref, proj, ed):
    Mt = _time_op_normalized(ops, z, t, mu_ref)
    return Mt - np.exp((_log_time1(ops, ed.value) - mu_ref) * t) * proj


def convexity_profile(spec: ModelSpec, theta_grid, *, n: int | None = None) -> list[tuple[float, float]]:
    """Second divided differences of the cumulant curve over consecutive
    theta triples; all must be positive under the convexity condition."""
    ops = operators_for(spec, n)
    thetas = sorted(float(t) for t in theta_grid)
    mus = [ops.mu(t) for t in thetas]
    out = []
    for i in range(1, len(thetas) - 1):
        t0, t1, t2 = thetas[i - 1], thetas[i], thetas[i + 1]
        dd = 2.0 * ((mus[i + 1] - mus[i]) / (t2 - t1) - (mus[i] - mus[i - 1]) / (t1 - t0)) / (t2 - t0)
        out.append((t1, dd))
    return out
