"""Independent oracles and whole-pipeline condition checking.

The chain oracle enumerates the joint law of (state, accumulated value) by
dynamic programming: lattice increments shift value indices exactly, and
Gaussian increments convolve analytically (cell masses against closed-form
normal CDF differences) with one Richardson extrapolation in the cell width.
Every condition verdict carries the numbers it was derived from.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from ._eigen import spectrum, top_eigen_data
from ._parallel import parallel_map
from .discretize import operators_for, _float_gcd
from .errors import ConvergenceError, DegenerateSpectrumError, ModelValidationError
from .model import DiscreteChainSpec, EvaluationFrame, ModelSpec
from .spectral import (b3_margins, convexity_profile, decay_profile,
                       _time_op_normalized)

MAX_ORACLE_STEPS = 60
MAX_ORACLE_CELLS = 1_000_000


@dataclass(frozen=True)
class ChainTailOracle:
    """Exact (or Richardson-refined) distribution of S_n on a value grid."""

    n_steps: int
    values: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        total = float(np.sum(self.probs))
        if abs(total - 1.0) > 1e-12:
            raise ConvergenceError(f"oracle mass {total:.15f} deviates from 1 beyond 1e-12")

    def tail(self, y: float) -> float:
        return float(np.sum(self.probs[self.values >= y - 1e-9]))


def brute_force_chain_tail(chain: DiscreteChainSpec, n_steps: int, a: float, *,
                           x0: int = 0) -> float:
    """Exact P(S_n >= a n) by dynamic programming over (state, value)."""
    if n_steps < 1:
        raise ValueError("need at least one step")
    if n_steps > MAX_ORACLE_STEPS:
        raise ModelValidationError(f"oracle is desk-scale: n_steps <= {MAX_ORACLE_STEPS}")
    var = chain.variances()
    y = float(a) * n_steps
    if np.all(var == 0.0):
        oracle = _lattice_distribution(chain, n_steps, x0)
        return oracle.tail(y)
    if np.any(var == 0.0):
        raise ModelValidationError(
            "mixed deterministic/Gaussian increments are not supported by the DP oracle")
    coarse, fine = (_gaussian_tail_dp(chain, n_steps, x0, y, cells)
                    for cells in (2**18, 2**19))
    return float((4.0 * fine - coarse) / 3.0)


def chain_distribution(chain: DiscreteChainSpec, n_steps: int, *, x0: int = 0) -> ChainTailOracle:
    """Exact lattice distribution of S_n (deterministic increments only)."""
    if np.any(chain.variances() > 0.0):
        raise ModelValidationError("exact distribution tables require deterministic increments")
    return _lattice_distribution(chain, n_steps, x0)


def _lattice_distribution(chain: DiscreteChainSpec, n_steps: int, x0: int) -> ChainTailOracle:
    P = chain.transition_matrix()
    m = chain.means()
    base = float(np.min(m))
    span = 0.0
    for v in m:
        span = _float_gcd(span, abs(float(v) - base))
    if span == 0.0:
        values = np.array([base * n_steps])
        return ChainTailOracle(n_steps=n_steps, values=values, probs=np.array([1.0]))
    k = np.rint((m - base) / span).astype(int)
    if np.max(np.abs((m - base) - k * span)) > 1e-9:
        raise ModelValidationError("increments are not commensurate with a common lattice")
    kmax = int(np.max(k))
    width = n_steps * kmax + 1
    if chain.n_states * width > MAX_ORACLE_CELLS:
        raise ModelValidationError("value grid exceeds the desk-scale cell budget")
    dp = np.zeros((chain.n_states, width))
    dp[x0, 0] = 1.0
    for _ in range(n_steps):
        mixed = P.T @ dp
        new = np.zeros_like(dp)
        for j in range(chain.n_states):
            kj = k[j]
            if kj:
                new[j, kj:] = mixed[j, : width - kj]
            else:
                new[j] = mixed[j]
        dp = new
    probs = dp.sum(axis=0)
    values = base * n_steps + span * np.arange(width)
    keep = probs > 0.0
    return ChainTailOracle(n_steps=n_steps, values=values[keep], probs=probs[keep])


def _gaussian_tail_dp(chain: DiscreteChainSpec, n_steps: int, x0: int, y: float,
                      n_cells: int) -> float:
    if n_cells > MAX_ORACLE_CELLS:
        raise ModelValidationError("value grid exceeds the desk-scale cell budget")
    P = chain.transition_matrix()
    m = chain.means()
    sd = np.sqrt(chain.variances())
    lo = n_steps * float(np.min(m)) - 12.0 * float(np.max(sd)) * np.sqrt(n_steps) - 1.0
    hi = n_steps * float(np.max(m)) + 12.0 * float(np.max(sd)) * np.sqrt(n_steps) + 1.0
    delta = (hi - lo) / n_cells
    centers = lo + delta * np.arange(n_cells)

    # circular convolution kernels; mass beyond the 12-sigma margin is < 1e-30
    offsets = np.fft.fftfreq(n_cells, d=1.0 / n_cells) * delta
    kernel_fft = []
    for j in range(chain.n_states):
        cell_mass = (ndtr((offsets + 0.5 * delta - m[j]) / sd[j])
                     - ndtr((offsets - 0.5 * delta - m[j]) / sd[j]))
        kernel_fft.append(np.fft.rfft(cell_mass))

    dp = np.zeros((chain.n_states, n_cells))
    # first step handled exactly from the point mass at value 0
    for j in range(chain.n_states):
        dp[j] = P[x0, j] * (ndtr((centers + 0.5 * delta - m[j]) / sd[j])
                            - ndtr((centers - 0.5 * delta - m[j]) / sd[j]))
    for _ in range(n_steps - 1):
        mixed = P.T @ dp
        for j in range(chain.n_states):
            dp[j] = np.fft.irfft(np.fft.rfft(mixed[j]) * kernel_fft[j], n=n_cells)
    probs = dp.sum(axis=0)
    # cells fully above y, plus the linear fraction of the straddling cell
    upper_edges = centers + 0.5 * delta
    full = upper_edges - delta >= y
    tail = float(np.sum(probs[full]))
    straddle = (~full) & (upper_edges > y)
    if np.any(straddle):
        tail += float(np.sum(probs[straddle] * (upper_edges[straddle] - y) / delta))
    return tail


# ---------------------------------------------------------------------------
# Condition suite.

@dataclass(frozen=True)
class ConditionVerdict:
    name: str
    passed: bool
    evidence: dict
    note: str = ""


@dataclass(frozen=True)
class ConditionReport:
    model: str
    verdicts: tuple[ConditionVerdict, ...]

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts)

    def verdict(self, name: str) -> ConditionVerdict:
        for v in self.verdicts:
            if v.name == name:
                return v
        raise KeyError(name)


def projector_time_independence(spec: ModelSpec, theta: float, t_list, *,
                                n: int | None = None) -> float:
    """Max deviation between the top spectral projector recomputed from the
    time-t semigroup matrix and the rank-one g (x) psi from time 1."""
    ops = operators_for(spec, n)
    theta = float(theta)
    ed = ops.eigendata(theta)
    proj = np.outer(ed.g, ed.psi) * ops.weight
    mu = ops.mu(theta)
    worst = 0.0
    for t in t_list:
        t = float(t)
        if not 1.0 <= t <= 2.0:
            raise ValueError("projector check samples t in [1, 2]")
        Mt = _time_op_normalized(ops, theta, t, mu)
        ed_t = top_eigen_data(Mt, weight=ops.weight, sort="abs", positive=True)
        proj_t = np.outer(ed_t.g, ed_t.psi) * ops.weight
        worst = max(worst, float(np.max(np.abs(proj_t - proj))))
    return worst


def run_condition_suite(spec: ModelSpec, theta_grid, s_grid, t_grid, *,
                        n: int | None = None, frame: EvaluationFrame | None = None,
                        label: str = "") -> ConditionReport:
    """Aggregate numeric checks of the spectral conditions; failures are
    verdicts, never exceptions."""
    thetas = [float(t) for t in theta_grid]
    if not thetas:
        return ConditionReport(model=label or spec.kind, verdicts=())
    svals = [float(s) for s in s_grid if s != 0]
    tvals = [float(t) for t in t_grid]
    ops = operators_for(spec, n)
    frame = frame or EvaluationFrame()
    verdicts = [
        _check_b1_surrogate(ops, thetas),
        _check_b2(ops, thetas),
        _check_b3_suite(ops, thetas, svals),
        _check_decay(spec, thetas, svals, tvals, n),
        _check_projector(spec, thetas, n, ops),
        _check_d3(spec, ops, thetas, frame, n),
    ]
    return ConditionReport(model=label or spec.kind, verdicts=tuple(verdicts))


def _check_b1_surrogate(ops, thetas) -> ConditionVerdict:
    """Analyticity surrogate: the top eigenvalue sampled on a small disc is
    reproduced by a degree-4 polynomial to 1e-8."""
    radius, degree = 0.05, 4
    worst = 0.0
    try:
        for th in thetas:
            zs = [complex(th, 0.0)]
            for r in (0.4 * radius, radius):
                zs += [th + r * np.exp(2j * np.pi * k / 8) for k in range(8)]
            vals = np.array([complex(ops.eigendata(z).value) for z in zs])
            dz = np.array(zs) - th
            design = np.column_stack([dz**p for p in range(degree + 1)])
            coef, *_ = np.linalg.lstsq(design, vals, rcond=None)
            resid = float(np.max(np.abs(design @ coef - vals)))
            worst = max(worst, resid)
    except DegenerateSpectrumError as exc:
        return ConditionVerdict("B1", False, {"residual": np.inf}, note=str(exc))
    return ConditionVerdict("B1", worst < 1e-8, {"residual": worst,
                                                 "disc_radius": radius, "degree": degree})


def _check_b2(ops, thetas) -> ConditionVerdict:
    gaps = {}
    try:
        for th in thetas:
            ed = ops.eigendata(th)
            gaps[th] = _gap_per_time(ops, ed)
    except DegenerateSpectrumError as exc:
        return ConditionVerdict("B2", False, {"gaps": gaps}, note=str(exc))
    ok = all(g > 0.0 for g in gaps.values())
    return ConditionVerdict("B2", ok, {"gaps": gaps, "min_gap": min(gaps.values())})


def _gap_per_time(ops, ed) -> float:
    if not ops.is_chain:
        return ed.gap
    lam = abs(ed.value)
    rest = lam - ed.gap
    return np.inf if rest <= 0 else float(np.log(lam) - np.log(rest))


def _envelope_mu(ops, theta: float) -> float:
    w = spectrum(ops.tilted(float(theta)))
    return float(np.log(np.max(np.abs(w)))) if ops.is_chain else float(np.max(w.real))


def _check_b3_suite(ops, thetas, svals) -> ConditionVerdict:
    # per-theta sweeps are stateless eigenvalue work: safe to thread, and the
    # ordered collection keeps parallel and serial output identical
    per_theta = parallel_map(lambda th: b3_margins(ops, th, svals), thetas)
    margins = {}
    for th, rows in zip(thetas, per_theta):
        for s, margin in rows:
            margins[(th, s)] = margin
    min_margin = min(margins.values()) if margins else np.inf
    argmin = min(margins, key=margins.get) if margins else None
    return ConditionVerdict("B3", min_margin > 1e-8,
                            {"min_margin": min_margin, "at": argmin,
                             "margins": margins})


def _check_decay(spec, thetas, svals, tvals, n) -> ConditionVerdict:
    s_decay = [s for s in svals if abs(s) >= 1.0] or svals
    t_decay = [t for t in tvals if 1.0 <= t <= 4.0] or [1.0, 2.0]
    evidence = {}
    ok = True
    note = ""
    for th in thetas:
        try:
            prof = decay_profile(spec, th, s_decay, t_decay, n=n)
            evidence[th] = {"K": prof.K, "epsilon": prof.epsilon,
                            "decay_rate": -np.log1p(-prof.epsilon)}
        except (ConvergenceError, DegenerateSpectrumError) as exc:
            evidence[th] = {"K": None, "epsilon": None}
            ok = False
            note = str(exc)
    return ConditionVerdict("D1-2", ok, evidence, note=note)


def _check_projector(spec, thetas, n, ops) -> ConditionVerdict:
    t_list = [1.0, 1.5, 2.0] if not ops.is_chain else [1, 2]
    residuals = {}
    ok = True
    note = ""
    for th in thetas:
        try:
            residuals[th] = projector_time_independence(spec, th, t_list, n=n)
        except DegenerateSpectrumError as exc:
            residuals[th] = None
            ok = False
            note = str(exc)
    ok = ok and all(r is not None and r < 1e-8 for r in residuals.values())
    return ConditionVerdict("D2", ok, {"residuals": residuals, "t_list": t_list}, note=note)


def _check_d3(spec, ops, thetas, frame, n) -> ConditionVerdict:
    evidence = {}
    ok = True
    note = ""
    if len(thetas) >= 3:
        try:
            dds = convexity_profile(spec, thetas, n=n)
        except DegenerateSpectrumError:
            # negative controls: fall back to the spectral envelope
            mus = [_envelope_mu(ops, th) for th in thetas]
            dds = []
            for i in range(1, len(thetas) - 1):
                t0, t1, t2 = thetas[i - 1], thetas[i], thetas[i + 1]
                dd = 2.0 * ((mus[i + 1] - mus[i]) / (t2 - t1)
                            - (mus[i] - mus[i - 1]) / (t1 - t0)) / (t2 - t0)
                dds.append((t1, dd))
            note = "convexity measured on the spectral envelope (degenerate top pair)"
        evidence["second_divided_differences"] = dds
        ok = all(dd > 0.0 for _, dd in dds)
    positivity = {}
    for th in thetas:
        try:
            ed = ops.eigendata(th)
            size = ed.g.size
            val = float(ed.g[frame.index_on(size)]
                        * np.sum(ed.psi * frame.vector_on(size)) * ops.weight)
            positivity[th] = val
        except DegenerateSpectrumError as exc:
            positivity[th] = None
            ok = False
            note = str(exc)
    evidence["ell_pi_v"] = positivity
    ok = ok and all(v is not None and v > 0.0 for v in positivity.values())
    return ConditionVerdict("D3", ok, evidence, note=note)


def quick_condition_check(spec: ModelSpec, theta: float, *,
                          n: int | None = None,
                          frame: EvaluationFrame | None = None) -> ConditionReport:
    """Light pre-flight check used by the CLI before expansion commands."""
    theta = max(float(theta), 0.05)
    grid = [0.0, 0.5 * theta, theta] if theta > 0 else [0.0]
    return run_condition_suite(spec, grid, [1.0, 5.0, 20.0], [1.0, 2.0],
                               n=n, frame=frame, label=f"quick@{theta:g}")
