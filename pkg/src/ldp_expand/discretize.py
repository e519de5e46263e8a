"""Finite-dimensional operators for a model: generator stencils, tilts,
semigroup steps, invariant densities, and cached per-model workspaces.

The torus generator uses the divergence-form second-order stencil

    (A u)_i = (1/2) [ d_{i+1/2} (u_{i+1} - u_i) - d_{i-1/2} (u_i - u_{i-1}) ] / dx^2
              + V0_i (u_{i+1} - u_{i-1}) / (2 dx),

with midpoint-averaged d = V V^T, which keeps constants in the kernel
exactly and stays self-adjoint when V0 = 0.  Tilting adds the diagonal
z b(x) + z^2 sigma(x)^2 / 2.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from ._eigen import EigenData, quiet_singular, rqi_pair, top_eigen_data
from .errors import (GridResolutionError, ModelValidationError,
                     SemigroupOverflowError)
from .model import (DiscreteChainSpec, EvaluationFrame, ModelSpec,
                    TorusDiffusionSpec, validate_spec)

DEFAULT_GRID_N = 256

# exp(t G) entries reach exp(t * max row Gershgorin surplus); beyond this the
# result overflows double precision and time-splitting is required.
OVERFLOW_CAP = 700.0


@dataclass(frozen=True)
class PeriodicGrid:
    """Uniform periodic grid with n points per dimension and spacing 1/n."""

    n: int
    dim: int = 1

    def __post_init__(self):
        if self.n < 8:
            raise GridResolutionError(f"grid needs n >= 8, got {self.n}")
        if self.n % 2:
            raise GridResolutionError(f"grid needs even n for symmetric stencils, got {self.n}")
        if self.dim not in (1, 2):
            raise GridResolutionError(f"dim must be 1 or 2, got {self.dim}")

    @property
    def dx(self) -> float:
        return 1.0 / self.n

    @property
    def size(self) -> int:
        return self.n ** self.dim

    def points(self) -> np.ndarray:
        return np.arange(self.n) / self.n

    def flat_index(self, i: int, j: int | None = None) -> int:
        """Row-major flattened index (dim=2) or the index itself (dim=1)."""
        if self.dim == 1:
            return int(i) % self.n
        if j is None:
            raise ValueError("dim=2 grid needs two indices")
        return (int(i) % self.n) * self.n + (int(j) % self.n)


@dataclass(frozen=True)
class GeneratorMatrix:
    """Discretized (possibly complex-tilted) generator."""

    matrix: np.ndarray
    z: complex
    tag: str  # "base" or "tilted"
    grid: PeriodicGrid

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class InvariantDensity:
    """Nonnegative stationary density with unit integral."""

    rho: np.ndarray
    residual: float
    weight: float

    def integral(self) -> float:
        return float(np.sum(self.rho) * self.weight)


def build_generator(spec: TorusDiffusionSpec, grid: PeriodicGrid) -> GeneratorMatrix:
    """Divergence-form discretization of A u = (1/2) div(V V^T grad u) + V0 grad u."""
    _check_torus(spec, grid)
    n, dx = grid.n, grid.dx
    x = grid.points()
    d = spec.diffusion_coeff(x)
    v0 = np.asarray(spec.drift_v0(x), dtype=float)

    d_plus = 0.5 * (d + np.roll(d, -1))     # d_{i+1/2}
    d_minus = np.roll(d_plus, 1)            # d_{i-1/2}
    up = 0.5 * d_plus / dx**2 + v0 / (2.0 * dx)
    lo = 0.5 * d_minus / dx**2 - v0 / (2.0 * dx)
    if np.any(up < 0.0) or np.any(lo < 0.0):
        raise GridResolutionError(
            "drift overwhelms diffusion at this resolution (negative off-diagonal); refine the grid")

    A = np.zeros((n, n))
    idx = np.arange(n)
    A[idx, (idx + 1) % n] = up
    A[idx, (idx - 1) % n] = lo
    A[idx, idx] = -(up + lo)
    return GeneratorMatrix(matrix=A, z=0.0, tag="base", grid=grid)


def build_tilted_generator(spec: TorusDiffusionSpec, grid: PeriodicGrid, z: complex) -> GeneratorMatrix:
    """G(z) = A + diag(z b + z^2 sigma^2 / 2)."""
    base = build_generator(spec, grid)
    return _tilt(base, spec, z)


def _tilt(base: GeneratorMatrix, spec: TorusDiffusionSpec, z: complex) -> GeneratorMatrix:
    if z == 0:
        return base
    x = base.grid.points()
    b = np.asarray(spec.obs_drift_b(x), dtype=float)
    sig2 = np.asarray(spec.obs_noise_sigma(x), dtype=float) ** 2
    diag = z * b + 0.5 * z * z * sig2
    G = base.matrix.astype(np.result_type(base.matrix.dtype, np.asarray(diag).dtype), copy=True)
    G[np.arange(G.shape[0]), np.arange(G.shape[0])] += diag
    return GeneratorMatrix(matrix=G, z=z, tag="tilted", grid=base.grid)


def _check_torus(spec: TorusDiffusionSpec, grid: PeriodicGrid):
    if spec.dim != 1:
        raise NotImplementedError("operations support dim=1 models only (dim=2 is spec-level)")
    report = validate_spec(spec, n=grid.n)
    report.raise_for_errors()
    kmax = spec.max_harmonic()
    if kmax and grid.n < 4 * kmax:
        raise GridResolutionError(
            f"grid n={grid.n} cannot resolve harmonic k={kmax} (need n >= {4 * kmax})")
    for f in (*spec.fields_v, spec.drift_v0, spec.obs_drift_b, spec.obs_noise_sigma):
        if hasattr(f, "values") and len(f.values) != grid.n:
            raise GridResolutionError(
                f"tabulated field length {len(f.values)} must equal grid n={grid.n}")


def semigroup_step(G: GeneratorMatrix | np.ndarray, t: float) -> np.ndarray:
    """exp(t G) by scaling-and-squaring (Pade kernel), 1e-12 relative accuracy."""
    if t < 0:
        raise ValueError(f"semigroup time must be nonnegative, got {t}")
    M = G.matrix if isinstance(G, GeneratorMatrix) else np.asarray(G)
    surplus = _gershgorin_top(M)
    if t * surplus > OVERFLOW_CAP:
        raise SemigroupOverflowError(
            f"t * growth bound = {t * surplus:.3g} exceeds {OVERFLOW_CAP}; "
            "split the time interval or use log-domain evaluation")
    return sla.expm(t * M)


def _gershgorin_top(M: np.ndarray) -> float:
    diag = np.real(np.diag(M))
    offsum = np.sum(np.abs(M), axis=1) - np.abs(np.diag(M))
    return float(np.max(diag + offsum))


def invariant_density(A: GeneratorMatrix | DiscreteChainSpec) -> InvariantDensity:
    """Stationary density: null vector of A^T (generators) or the left Perron
    vector of the transition matrix (chains)."""
    if isinstance(A, DiscreteChainSpec):
        P = A.transition_matrix()
        rho = _null_density(P.T - np.eye(A.n_states), scale=1.0)
        residual = float(np.max(np.abs(P.T @ rho - rho)))
        rho = rho / rho.sum()
        return InvariantDensity(rho=rho, residual=residual, weight=1.0)
    if not isinstance(A, GeneratorMatrix) or A.tag != "base":
        raise ModelValidationError("invariant density needs the base (untilted) generator")
    M = A.matrix
    rho = _null_density(M.T, scale=float(np.max(np.abs(M))))
    weight = A.grid.dx
    rho = rho / (rho.sum() * weight)
    residual = float(np.max(np.abs(M.T @ rho)))
    return InvariantDensity(rho=rho, residual=residual, weight=weight)


def _null_density(MT: np.ndarray, scale: float) -> np.ndarray:
    w, vr = sla.eig(MT)
    order = np.argsort(np.abs(w))
    tol = max(1e-8 * max(scale, 1.0), 1e-12)
    if len(w) > 1 and abs(w[order[1]]) < tol:
        raise ModelValidationError(
            f"null space dimension != 1 (|second eigenvalue| = {abs(w[order[1]]):.3e}); "
            "model is not irreducible at this discretization")
    vec = np.real(vr[:, order[0]])
    # one inverse-iteration polish against the (numerically) singular matrix
    try:
        with quiet_singular():
            lu = sla.lu_factor(MT - w[order[0]] * np.eye(MT.shape[0], dtype=MT.dtype))
            cand = sla.lu_solve(lu, vec.astype(MT.dtype))
        cand = np.real(cand)
        if np.all(np.isfinite(cand)) and np.max(np.abs(cand)) > 0:
            vec = cand
    except (sla.LinAlgError, ValueError):
        pass
    vec = vec / np.max(np.abs(vec))
    if vec.sum() < 0:
        vec = -vec
    lo = vec.min()
    if lo < -1e-8:
        raise ModelValidationError(f"stationary density is not nonnegative (min {lo:.3e})")
    return np.clip(vec, 0.0, None)


# ---------------------------------------------------------------------------
# Cached workspaces binding a spec to its finite-dimensional operators.

_WORKSPACES: dict = {}


def operators_for(spec: ModelSpec, n: int | None = None):
    """Workspace for a spec, cached so spectra are shared across operations."""
    if isinstance(spec, TorusDiffusionSpec):
        key = (spec, n or DEFAULT_GRID_N)
        if key not in _WORKSPACES:
            _WORKSPACES[key] = DiffusionOperators(spec, key[1])
        return _WORKSPACES[key]
    if isinstance(spec, DiscreteChainSpec):
        key = (spec, None)
        if key not in _WORKSPACES:
            _WORKSPACES[key] = ChainOperators(spec)
        return _WORKSPACES[key]
    raise TypeError(f"no operators for {type(spec).__name__}")


class DiffusionOperators:
    """Tabulated fields, generator, and cached spectral data for one diffusion."""

    is_chain = False
    # warm Rayleigh-quotient starts are only trusted this close to a cached tilt
    _WARM_RADIUS = 0.75

    def __init__(self, spec: TorusDiffusionSpec, n: int = DEFAULT_GRID_N):
        self.spec = spec
        self.grid = PeriodicGrid(n)
        self.x = self.grid.points()
        self.dx = self.grid.dx
        self.weight = self.grid.dx
        self.vv = spec.diffusion_coeff(self.x)
        self.b = np.asarray(spec.obs_drift_b(self.x), dtype=float)
        self.sigma2 = np.asarray(spec.obs_noise_sigma(self.x), dtype=float) ** 2
        self.base = build_generator(spec, self.grid)
        self._rho: InvariantDensity | None = None
        self._eigen: dict[complex, EigenData] = {}
        self._mu_lite: dict[float, tuple[float, np.ndarray, np.ndarray]] = {}
        self._mgf_cache: dict = {}
        # top-pair continuation along saddle lines: theta -> {s: (value, g, psi)}
        self._top_lines: dict[float, dict[float, tuple]] = {}
        self._top_cert: dict = {}

    # -- operators ---------------------------------------------------------
    def tilted(self, z: complex) -> np.ndarray:
        return _tilt(self.base, self.spec, z).matrix

    def generator(self, z: complex) -> GeneratorMatrix:
        return _tilt(self.base, self.spec, z)

    def tilt_diagonal(self, z: complex) -> np.ndarray:
        return z * self.b + 0.5 * z * z * self.sigma2

    @property
    def rho(self) -> InvariantDensity:
        if self._rho is None:
            self._rho = invariant_density(self.base)
        return self._rho

    def integral(self, values: np.ndarray) -> float:
        return float(np.sum(values) * self.weight)

    # -- spectra -----------------------------------------------------------
    def eigendata(self, z: complex) -> EigenData:
        """Full top-eigen data of G(z); real tilts demand a positive pair."""
        z = complex(z)
        if z.imag == 0.0:
            z = z.real
        if z not in self._eigen:
            real = isinstance(z, float) or z.imag == 0.0
            self._eigen[z] = top_eigen_data(self.tilted(z), weight=self.weight,
                                            sort="real", positive=real)
        return self._eigen[z]

    def perron(self, theta: float) -> tuple[float, np.ndarray, np.ndarray]:
        """(mu, g, psi) of the real tilt at theta: warm Rayleigh-quotient
        continuation along a theta ladder, dense eigensolve as fallback."""
        theta = float(theta)
        hit = self._mu_lite.get(theta)
        if hit is not None:
            return hit
        if theta in self._eigen:
            ed = self._eigen[theta]
            self._mu_lite[theta] = (float(np.real(ed.value)), ed.g, ed.psi)
            return self._mu_lite[theta]
        near_theta, seed = self._nearest_lite(theta)
        while seed is not None and abs(near_theta - theta) > 1e-15:
            gap_th = theta - near_theta
            step = np.sign(gap_th) * min(abs(gap_th), self._WARM_RADIUS)
            rung = theta if abs(gap_th) <= self._WARM_RADIUS else near_theta + step
            warm = self._rqi(rung, seed)
            if warm is None:
                seed = None
                break
            self._mu_lite[rung] = warm
            near_theta, seed = rung, warm
            if rung == theta:
                return warm
        if seed is not None:
            return seed
        ed = self.eigendata(theta)
        self._mu_lite[theta] = (float(np.real(ed.value)), ed.g, ed.psi)
        return self._mu_lite[theta]

    def mu(self, theta: float) -> float:
        """log of the time-1 Perron eigenvalue, i.e. the rightmost eigenvalue
        of G(theta)."""
        return self.perron(theta)[0]

    def _nearest_lite(self, theta: float):
        if not self._mu_lite:
            # stationarity seeds the continuation: mu(0) = 0, g = 1, psi = rho
            self._mu_lite[0.0] = (0.0, np.ones(self.grid.n), self.rho.rho.copy())
        best_th = min(self._mu_lite, key=lambda th: abs(th - theta))
        return best_th, self._mu_lite[best_th]

    def _rqi(self, theta: float, seed) -> tuple[float, np.ndarray, np.ndarray] | None:
        """Two-sided Rayleigh-quotient iteration toward the Perron pair of
        G(theta); returns None when convergence or positivity fails."""
        M = self.tilted(theta)
        _, g, psi = seed
        mu = float((psi @ (M @ g)) / (psi @ g))
        ident = np.eye(M.shape[0])
        norm_m = np.max(np.abs(M))
        target = max(1e-12, 32 * np.finfo(float).eps * norm_m)
        converged = False
        for _ in range(8):
            if (np.max(np.abs(M @ g - mu * g)) < target
                    and np.max(np.abs(psi @ M - mu * psi)) < target):
                converged = True
                break
            try:
                with quiet_singular():
                    lu = sla.lu_factor(M - mu * ident)
                    g2 = sla.lu_solve(lu, g)
                    psi2 = sla.lu_solve(lu, psi, trans=1)
            except (sla.LinAlgError, ValueError):
                return None
            if not (np.all(np.isfinite(g2)) and np.all(np.isfinite(psi2))):
                return None
            g2 = g2 / np.max(np.abs(g2))
            psi2 = psi2 / np.max(np.abs(psi2))
            denom = psi2 @ g2
            if denom == 0 or not np.isfinite(denom):
                return None
            mu2 = (psi2 @ (M @ g2)) / denom
            if not np.isfinite(mu2):
                return None
            g, psi, mu = g2, psi2, float(np.real(mu2))
        if not converged:
            return None
        if np.min(g) < 0:
            g = -g
        if np.min(psi) < 0:
            psi = -psi
        if np.min(g) <= 0 or np.min(psi) < -1e-10:
            return None  # left the Perron branch; caller falls back to dense
        g = g / np.max(g)
        psi = np.clip(psi, 0.0, None)
        psi = psi / (np.sum(psi * g) * self.weight)
        return (mu, g, psi)

    # -- moment generating data ---------------------------------------------
    def nmgf(self, z: complex, ts: np.ndarray, frame: EvaluationFrame, mu_ref: float) -> np.ndarray:
        """Normalized transform values  E_x0[e^{z Y_t}] * exp(-t mu_ref)  for
        each t, via one cached eigendecomposition of G(z) per tilt."""
        key = (complex(z), frame.cache_key())
        hit = self._mgf_cache.get(key)
        if hit is None:
            Gz = self.tilted(z)
            w, vr = sla.eig(Gz)
            i0 = frame.index_on(self.grid.n)
            v = frame.vector_on(self.grid.n)
            coeff = sla.solve(vr, v.astype(complex))
            c = vr[i0, :] * coeff
            hit = (w, c)
            self._mgf_cache[key] = hit
        w, c = hit
        ts = np.asarray(ts, dtype=float)
        return np.array([np.sum(c * np.exp((w - mu_ref) * t)) for t in ts])

    def top_pair(self, theta: float, s: float):
        """Dominant eigen pair of G(theta + i s), continued in s from the real
        Perron pair by two-sided Rayleigh-quotient iteration; None when the
        continuation fails to converge."""
        theta, s = float(theta), float(s)
        line = self._top_lines.setdefault(theta, {})
        hit = line.get(s)
        if hit is not None:
            return hit
        if not line:
            mu0, g0, psi0 = self.perron(theta)
            line[0.0] = (complex(mu0), g0.astype(complex), psi0.astype(complex))
            if s == 0.0:
                return line[0.0]
        near = min(line, key=lambda sv: abs(sv - s))
        _, g_seed, psi_seed = line[near]
        pair = rqi_pair(self.tilted(complex(theta, s)), g_seed, psi_seed, self.weight)
        if pair is None:
            return None
        line[s] = pair
        return pair

    def nmgf_top(self, z: complex, ts, frame: EvaluationFrame, mu_ref: float):
        """Single-mode transform  c_top exp((lambda_top - mu_ref) t); valid
        once the sub-dominant remainder is certified negligible.  None when
        the continuation fails."""
        z = complex(z)
        pair = self.top_pair(z.real, z.imag)
        if pair is None:
            return None
        value, g, psi = pair
        i0 = frame.index_on(self.grid.n)
        v = frame.vector_on(self.grid.n)
        c = g[i0] * np.sum(psi * v) * self.weight
        ts = np.asarray(ts, dtype=float)
        return np.array([c * np.exp((value - mu_ref) * t) for t in ts])

    def certify_top_mode(self, theta: float, t: float, frame: EvaluationFrame,
                         tol: float, s_probes) -> bool:
        """Compare the single-mode transform against the full decomposition at
        probe tilts; certification at horizon t extends to all larger t."""
        key = (float(theta), frame.cache_key())
        cached = self._top_cert.get(key)
        if cached is not None:
            ok_t, verdict = cached
            if verdict and t >= ok_t:
                return True
            if not verdict and t <= ok_t:
                return False
        mu_ref = self.mu(theta)
        peak = abs(self.nmgf(complex(theta, 0.0), (t,), frame, mu_ref)[0])
        if peak == 0.0:
            return False
        for s in s_probes:
            top = self.nmgf_top(complex(theta, float(s)), (t,), frame, mu_ref)
            if top is None:
                self._top_cert[key] = (t, False)
                return False
            full = self.nmgf(complex(theta, float(s)), (t,), frame, mu_ref)
            if abs(top[0] - full[0]) > tol * peak:
                self._top_cert[key] = (t, False)
                return False
        self._top_cert[key] = (t, True)
        return True


class ChainOperators:
    """Tilted transfer matrices and spectra for a finite chain."""

    is_chain = True

    def __init__(self, spec: DiscreteChainSpec):
        report = validate_spec(spec)
        report.raise_for_errors()
        self.spec = spec
        self.P = spec.transition_matrix()
        self.m = spec.means()
        self.var = spec.variances()
        self.weight = 1.0
        self._eigen: dict[complex, EigenData] = {}
        self._rho: InvariantDensity | None = None

    @property
    def n_states(self) -> int:
        return self.spec.n_states

    def tilted(self, z: complex) -> np.ndarray:
        """Time-1 transfer matrix T(z)_{ij} = P_{ij} exp(z m_j + z^2 var_j / 2)."""
        wcol = np.exp(z * self.m + 0.5 * z * z * self.var)
        return self.P * wcol[None, :]

    @property
    def rho(self) -> InvariantDensity:
        if self._rho is None:
            self._rho = invariant_density(self.spec)
        return self._rho

    def integral(self, values: np.ndarray) -> float:
        return float(np.sum(values))

    def eigendata(self, z: complex) -> EigenData:
        z = complex(z)
        if z.imag == 0.0:
            z = z.real
        if z not in self._eigen:
            real = isinstance(z, float) or z.imag == 0.0
            self._eigen[z] = top_eigen_data(self.tilted(z), weight=1.0,
                                            sort="abs", positive=real)
        return self._eigen[z]

    def perron(self, theta: float) -> tuple[float, np.ndarray, np.ndarray]:
        ed = self.eigendata(float(theta))
        return float(np.real(ed.value)), ed.g, ed.psi

    def mu(self, theta: float) -> float:
        """log Perron root of the time-1 tilted transfer matrix."""
        return float(np.log(self.perron(theta)[0]))

    def lattice(self) -> tuple[float, float] | None:
        """(span, per-step offset) when increments are deterministic on a
        lattice; None when any state has Gaussian noise."""
        if np.any(self.var > 0.0):
            return None
        base = float(self.m[0])
        span = 0.0
        for v in self.m[1:]:
            span = _float_gcd(span, abs(float(v) - base))
        return (span, base)

    def nmgf(self, z: complex, ns: np.ndarray, frame: EvaluationFrame, mu_ref: float) -> np.ndarray:
        """Normalized transform  E_x0[e^{z S_n}] * lambda(theta)^{-n} over step
        counts, by repeated application of T(z) / e^{mu_ref}."""
        T = self.tilted(z) * np.exp(-mu_ref)
        i0 = frame.index_on(self.n_states)
        u = frame.vector_on(self.n_states).astype(complex)
        ns = np.asarray(ns, dtype=int)
        out = np.empty(ns.size, dtype=complex)
        want: dict[int, list[int]] = {}
        for k, n in enumerate(ns):
            want.setdefault(int(n), []).append(k)
        for k in want.get(0, ()):
            out[k] = u[i0]
        for step in range(1, int(ns.max(initial=0)) + 1):
            u = T @ u
            for k in want.get(step, ()):
                out[k] = u[i0]
        return out


def _float_gcd(a: float, b: float, tol: float = 1e-9) -> float:
    a, b = abs(a), abs(b)
    while b > tol:
        a, b = b, a % b
    return a
