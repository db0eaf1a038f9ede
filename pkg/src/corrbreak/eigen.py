"""Eigenvalues of small correlation matrices.

Closed forms cover p=2 (1 +/- rho) and p=3 (trigonometric roots of the
depressed characteristic cubic). A cyclic Jacobi solver handles any p and
doubles as the reference the closed forms are checked against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Admissibility slack on det(A) and on the cubic discriminant.
PSD_TOL = 1e-10
# arccos arguments beyond 1 by at most this much are rounding, anything larger is an error.
ACOS_SLACK = 1e-12
SYMMETRY_TOL = 1e-10
JACOBI_MAX_SWEEPS = 50


class EigenError(ValueError):
    """Input outside the domain of an eigenvalue routine."""


class ConvergenceError(ArithmeticError):
    """The Jacobi iteration hit its sweep cap."""


@dataclass(frozen=True)
class EigenSpectrum:
    """Eigenvalues in non-increasing order plus the index the test reads."""

    values: tuple[float, ...]
    selector_index: int = 0

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        object.__setattr__(self, "values", vals)
        if any(vals[i] < vals[i + 1] for i in range(len(vals) - 1)):
            raise EigenError(f"eigenvalues not sorted descending: {vals}")
        if not 0 <= self.selector_index < len(vals):
            raise EigenError(f"selector_index {self.selector_index} out of range for p={len(vals)}")

    @property
    def selected(self) -> float:
        return self.values[self.selector_index]

    @property
    def p(self) -> int:
        return len(self.values)

    def with_selector(self, index: int) -> "EigenSpectrum":
        return EigenSpectrum(self.values, index)


@dataclass(frozen=True)
class CubicIntermediates:
    """Coefficients of (lambda*)^3 + p_coef*lambda* = q_coef with lambda* = 1 - lambda."""

    p_coef: float
    q_coef: float
    Q: float
    R: float
    D: float
    theta: float


def _spectrum(vals, selector_index: int = 0) -> EigenSpectrum:
    return EigenSpectrum(tuple(sorted((float(v) for v in vals), reverse=True)), selector_index)


def eig2(rho: float) -> EigenSpectrum:
    if not -1.0 <= rho <= 1.0:
        raise EigenError(f"correlation {rho} outside [-1, 1]")
    return _spectrum((1.0 + rho, 1.0 - rho))


def cubic_intermediates(rho12: float, rho13: float, rho23: float) -> CubicIntermediates:
    s = rho12 * rho12 + rho13 * rho13 + rho23 * rho23
    p_coef = -s
    q_coef = -2.0 * rho12 * rho13 * rho23
    Q = p_coef / 3.0
    R = q_coef / 2.0
    D = Q**3 + R**2
    denom = math.sqrt(-(Q**3)) if Q < 0 else 0.0
    if denom == 0.0:
        theta = math.nan
    else:
        theta = math.acos(max(-1.0, min(1.0, R / denom)))
    return CubicIntermediates(p_coef, q_coef, Q, R, D, theta)


def eig3(rho12: float, rho13: float, rho23: float) -> EigenSpectrum:
    """Eigenvalues of the 3x3 correlation matrix with the given off-diagonals.

    The characteristic equation in lambda* = 1 - lambda is the depressed cubic
    (lambda*)^3 - S lambda* = -2 rho12 rho13 rho23 with S the sum of squared
    correlations; its three real roots are 2 sqrt(-Q) cos((theta + 2 pi k) / 3).
    """
    for r in (rho12, rho13, rho23):
        if not -1.0 <= r <= 1.0:
            raise EigenError(f"correlation {r} outside [-1, 1]")
    det = 1.0 + 2.0 * rho12 * rho13 * rho23 - (rho12**2 + rho13**2 + rho23**2)
    if det < -PSD_TOL:
        raise EigenError(
            f"({rho12}, {rho13}, {rho23}) is not a valid correlation matrix (det={det:.3g})"
        )
    c = cubic_intermediates(rho12, rho13, rho23)
    if c.D > PSD_TOL:
        raise EigenError(f"cubic discriminant D={c.D:.3g} > 0; matrix not admissible")

    neg_q3 = -(c.Q**3)
    if c.Q >= 0.0 or neg_q3 == 0.0:
        # all correlations zero (or small enough that Q^3 underflows)
        return _spectrum((1.0, 1.0, 1.0), 2)
    ratio = c.R / math.sqrt(neg_q3)
    if abs(ratio) > 1.0 + ACOS_SLACK:
        raise EigenError(f"arccos argument {ratio!r} outside [-1, 1]")
    theta = math.acos(max(-1.0, min(1.0, ratio)))
    amp = 2.0 * math.sqrt(-c.Q)
    roots = [amp * math.cos((theta + 2.0 * math.pi * k) / 3.0) for k in range(3)]
    return _spectrum([1.0 - r for r in roots], 2)


def eig3_batch(rho12, rho13, rho23) -> np.ndarray:
    """Vectorized eig3 without admissibility checks; rows sorted descending."""
    r12, r13, r23 = (np.asarray(r, dtype=float) for r in (rho12, rho13, rho23))
    Q = -(r12**2 + r13**2 + r23**2) / 3.0
    R = -r12 * r13 * r23
    neg_q3 = -(Q**3)
    ok = neg_q3 > 0.0
    safe = np.where(ok, neg_q3, 1.0)
    theta = np.arccos(np.clip(R / np.sqrt(safe), -1.0, 1.0))
    amp = 2.0 * np.sqrt(np.where(ok, -Q, 0.0))
    k = np.arange(3)
    roots = amp[..., None] * np.cos((theta[..., None] + 2.0 * np.pi * k) / 3.0)
    vals = np.where(ok[..., None], 1.0 - roots, 1.0)
    return -np.sort(-vals, axis=-1)


def _jacobi_eigenvalues(a: np.ndarray) -> np.ndarray:
    n = a.shape[0]
    tol = 1e-12 * n
    for _ in range(JACOBI_MAX_SWEEPS):
        off = math.sqrt(2.0 * float(np.sum(np.triu(a, 1) ** 2)))
        if off < tol:
            return np.diag(a).copy()
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = (1.0 if tau >= 0 else -1.0) / (abs(tau) + math.sqrt(1.0 + tau * tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                a[p, :] = a[:, p]
                a[q, :] = a[:, q]
                a[p, p] = ap[p] - t * apq
                a[q, q] = aq[q] + t * apq
                a[p, q] = a[q, p] = 0.0
    off = math.sqrt(2.0 * float(np.sum(np.triu(a, 1) ** 2)))
    if off < tol:
        return np.diag(a).copy()
    raise ConvergenceError(
        f"Jacobi did not converge in {JACOBI_MAX_SWEEPS} sweeps (off-diagonal norm {off:.3g})"
    )


def eig_sym(matrix) -> EigenSpectrum:
    """All eigenvalues of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps stop once the off-diagonal Frobenius norm drops below 1e-12 * p.
    """
    a = np.array(matrix, dtype=float, copy=True)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise EigenError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise EigenError("matrix has non-finite entries")
    asym = float(np.max(np.abs(a - a.T)))
    if asym > SYMMETRY_TOL:
        raise EigenError(f"matrix not symmetric (max |A - A'| = {asym:.3g})")
    a = 0.5 * (a + a.T)
    return _spectrum(_jacobi_eigenvalues(a))


def eigenvalues(corr, method: str = "closed") -> EigenSpectrum:
    """Spectrum of a correlation matrix, using the closed form when one exists."""
    a = np.asarray(corr, dtype=float)
    p = a.shape[0]
    if method == "jacobi" or p > 3:
        return eig_sym(a)
    if method != "closed":
        raise EigenError(f"unknown eigen method {method!r}")
    if p == 1:
        return _spectrum((a[0, 0],))
    if p == 2:
        return eig2(float(a[0, 1]))
    return eig3(float(a[0, 1]), float(a[0, 2]), float(a[1, 2]))
