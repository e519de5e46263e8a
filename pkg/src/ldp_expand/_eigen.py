"""Dense eigen machinery for the top (Perron) pair of tilted operators.

Desk-scale matrices (n <= 1024) are solved with the full dense spectrum;
the top pair is then polished by inverse iteration and a two-sided Rayleigh
quotient so that cumulant curves are smooth to near machine precision.
"""
from __future__ import annotations

import warnings
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import DegenerateSpectrumError


@contextmanager
def quiet_singular():
    """Inverse iteration factors matrices that are singular by design."""
    with warnings.catch_warnings(), np.errstate(all="ignore"):
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        yield

# Relative threshold below which the top pair counts as degenerate.
GAP_RTOL = 1e-8


@dataclass(frozen=True)
class EigenData:
    """Top eigenpair of a matrix operator.

    ``value`` is the matrix-scale eigenvalue (generator: rightmost; transfer
    matrix: largest modulus).  ``g`` is the right eigenvector with sup norm 1,
    ``psi`` the left eigenvector with bilinear pairing sum(psi * g) * weight
    equal to 1, and ``gap`` the distance from ``value`` to the rest of the
    spectrum in the sort metric.
    """

    value: complex
    g: np.ndarray
    psi: np.ndarray
    gap: float
    residual: float
    weight: float
    spectrum: np.ndarray


def top_eigen_data(M: np.ndarray, weight: float = 1.0, sort: str = "real",
                   positive: bool = False, polish: bool = True,
                   gap_rtol: float = GAP_RTOL) -> EigenData:
    """Compute the dominant eigenpair of a dense matrix.

    Parameters
    ----------
    M : square matrix (real or complex).
    weight : quadrature weight of one grid cell (dx on a torus grid, 1 for chains).
    sort : "real" picks the rightmost eigenvalue (generators), "abs" the
        largest modulus (time-1 transfer matrices).
    positive : enforce a positive right/left pair (real Perron case).
    """
    M = np.asarray(M)
    w, vl, vr = sla.eig(M, left=True, right=True)
    key = w.real if sort == "real" else np.abs(w)
    top = int(np.argmax(key))
    rest = np.delete(key, top)
    gap = float(key[top] - np.max(rest)) if rest.size else np.inf

    value = w[top]
    g = vr[:, top].copy()
    psi = vl[:, top].conj().copy()

    if polish:
        value, g, psi = _polish_pair(M, value, g, psi)

    if gap < gap_rtol * max(1.0, abs(value)):
        w_sorted = w[np.argsort(-key)]
        raise DegenerateSpectrumError(
            f"near-degenerate top pair: {w_sorted[0]:.12g} vs {w_sorted[1]:.12g} (gap {gap:.3e})")

    if positive:
        value, g, psi = _realize_positive(M, value, g, psi)
    else:
        j = int(np.argmax(np.abs(g)))
        g = g / g[j]
        g = g / np.max(np.abs(g))

    pairing = np.sum(psi * g) * weight
    if pairing == 0:
        raise DegenerateSpectrumError("left/right eigenvectors are bilinearly orthogonal")
    psi = psi / pairing

    residual = float(np.max(np.abs(M @ g - value * g)))
    return EigenData(value=value, g=g, psi=psi, gap=gap, residual=residual,
                     weight=weight, spectrum=w)


def _polish_pair(M, value, g, psi):
    """One to two rounds of inverse iteration plus a two-sided Rayleigh quotient."""
    n = M.shape[0]
    ident = np.eye(n, dtype=np.promote_types(M.dtype, type(value)))
    for _ in range(2):
        try:
            with quiet_singular():
                lu = sla.lu_factor(M - value * ident)
                g2 = sla.lu_solve(lu, g)
                psi2 = sla.lu_solve(lu, psi, trans=1)
        except (sla.LinAlgError, ValueError):
            break
        if not (np.all(np.isfinite(g2)) and np.all(np.isfinite(psi2))):
            break
        g2 = g2 / np.max(np.abs(g2))
        psi2 = psi2 / np.max(np.abs(psi2))
        denom = psi2 @ g2
        if denom == 0 or not np.isfinite(denom):
            break
        value2 = (psi2 @ (M @ g2)) / denom
        if not np.isfinite(value2):
            break
        res_new = np.max(np.abs(M @ g2 - value2 * g2))
        res_old = np.max(np.abs(M @ g - value * g))
        if res_new > res_old:
            break
        value, g, psi = value2, g2, psi2
    return value, g, psi


def _realize_positive(M, value, g, psi):
    """Cast a Perron pair of a real operator to positive real vectors."""
    if abs(np.imag(value)) > 1e-9 * max(1.0, abs(value)):
        raise DegenerateSpectrumError(f"expected a real top eigenvalue, got {value:.6g}")
    value = float(np.real(value))

    def fix(vec, label):
        scale = vec[int(np.argmax(np.abs(vec)))]
        vec = np.real(vec / scale)
        lo = np.min(vec)
        if lo < -1e-7 * np.max(np.abs(vec)):
            raise DegenerateSpectrumError(f"{label} eigenvector is not sign-definite (min {lo:.3e})")
        return np.clip(vec, 0.0, None)

    g = fix(g, "right")
    g = g / np.max(g)
    psi = fix(psi, "left")
    return value, g, psi


def spectrum(M: np.ndarray) -> np.ndarray:
    """All eigenvalues of a dense matrix (no vectors)."""
    return sla.eigvals(np.asarray(M))


def rqi_pair(M: np.ndarray, g0: np.ndarray, psi0: np.ndarray, weight: float,
             max_iter: int = 8):
    """Two-sided Rayleigh-quotient iteration for one eigen pair of a complex
    matrix, warm-started from (g0, psi0).  Returns (value, g, psi) with
    ``sum(psi * g) * weight = 1``, or None when convergence fails."""
    M = np.asarray(M)
    g = g0.astype(complex, copy=True)
    psi = psi0.astype(complex, copy=True)
    denom = psi @ g
    if denom == 0 or not np.isfinite(denom):
        return None
    value = complex((psi @ (M @ g)) / denom)
    ident = np.eye(M.shape[0], dtype=complex)
    target = max(1e-12, 32 * np.finfo(float).eps * float(np.max(np.abs(M))))
    converged = False
    for _ in range(max_iter):
        if (np.max(np.abs(M @ g - value * g)) < target
                and np.max(np.abs(psi @ M - value * psi)) < target):
            converged = True
            break
        try:
            with quiet_singular():
                lu = sla.lu_factor(M - value * ident)
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
        v2 = (psi2 @ (M @ g2)) / denom
        if not np.isfinite(v2):
            return None
        g, psi, value = g2, psi2, complex(v2)
    if not converged:
        return None
    j = int(np.argmax(np.abs(g)))
    g = g / g[j]
    g = g / np.max(np.abs(g))
    pairing = np.sum(psi * g) * weight
    if pairing == 0 or not np.isfinite(pairing):
        return None
    psi = psi / pairing
    return value, g, psi
