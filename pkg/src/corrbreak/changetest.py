"""Eigenvalue fluctuation test for a break in the correlation matrix.

For every prefix length t the selected eigenvalue D_t of the prefix
correlation matrix is compared with its full-sample counterpart D_T through
h_t = sqrt(t) (D_t - D_T). Under constant correlation h_t is asymptotically
centered normal with variance 2 lambda^2 (single eigenvalue), or follows the
joint ordered-eigenvalue density when lambda has multiplicity q > 1.

The maximum of |h_t| over t is compared with the pointwise critical value;
no correction for scanning over t is applied.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from statistics import NormalDist
from typing import Sequence, TextIO

import numpy as np

from .eigen import EigenError, eig_sym, eig3_batch
from .panel import StandardizedPanel, prefix_correlations

SCHEMA = "corrbreak/1"
MIN_BURN_IN = 10
# Full-sample eigenvalues closer than this are treated as one cluster of multiplicity q.
MULTIPLICITY_GAP = 1e-3
DEFAULT_MC_REPS = 100_000
SELECTORS = ("largest", "smallest")


class ConfigError(ValueError):
    """Invalid test configuration."""


@dataclass(frozen=True)
class NullLaw:
    """Asymptotic null law of sqrt(t)(D_t - lambda) for an eigenvalue of multiplicity q."""

    lam: float
    q: int = 1
    p: int | None = None

    def __post_init__(self):
        if not self.lam > 0:
            raise ConfigError(f"lambda must be positive, got {self.lam}")
        if self.q < 1:
            raise ConfigError(f"multiplicity q must be >= 1, got {self.q}")
        if self.p is not None and self.q > self.p:
            raise ConfigError(f"multiplicity q={self.q} exceeds dimension p={self.p}")


def log_norm_const(q: int) -> float:
    """log K(q), where 1/K(q) = 2^(q(q+3)/4) prod_{i=1..q} Gamma((q+1-i)/2)."""
    return -(q * (q + 3) / 4.0) * math.log(2.0) - sum(
        math.lgamma(0.5 * (q + 1 - i)) for i in range(1, q + 1)
    )


def null_pdf(h_vec: Sequence[float] | float, law: NullLaw) -> float:
    """Joint density of the ordered scaled eigenvalue deviations h_1 >= ... >= h_q.

    For q=1 this is the N(0, 2 lambda^2) density.
    """
    h = np.atleast_1d(np.asarray(h_vec, dtype=float))
    q = law.q
    if h.shape != (q,):
        raise ConfigError(f"expected {q} values for multiplicity q={q}, got {h.shape}")
    if q >= 2 and np.any(np.diff(h) > 0):
        raise ConfigError("h values must be sorted in non-increasing order")
    lam = law.lam
    vandermonde = 1.0
    for i in range(q):
        for j in range(i + 1, q):
            vandermonde *= h[i] - h[j]
    if vandermonde == 0.0:
        return 0.0
    log_f = (
        log_norm_const(q)
        - 0.5 * q * (q + 1) * math.log(lam)
        - float(np.sum(h * h)) / (4.0 * lam * lam)
    )
    return math.exp(log_f) * vandermonde


def sample_null(law: NullLaw, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw n ordered vectors (h_1 >= ... >= h_q) from the null law.

    The null density is the eigenvalue density of a symmetric Gaussian matrix
    with N(0, 2 lambda^2) diagonal and N(0, lambda^2) off-diagonal entries,
    so draws are eigenvalues of such matrices.
    """
    q = law.q
    g = rng.standard_normal((n, q, q)) * law.lam
    m = (g + np.swapaxes(g, 1, 2)) / math.sqrt(2.0)
    return np.linalg.eigvalsh(m)[:, ::-1]


def critical_value(
    alpha: float, law: NullLaw, mc_reps: int = DEFAULT_MC_REPS, seed: int = 0
) -> float:
    """Two-sided critical value for |h| at level alpha.

    q=1: sqrt(2) lambda z_{1-alpha/2}. q>1: the (1-alpha) quantile of
    max_i |h_i| under the joint law, by Monte Carlo with ``mc_reps`` draws.
    """
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
    if law.q == 1:
        return math.sqrt(2.0) * law.lam * NormalDist().inv_cdf(1.0 - alpha / 2.0)
    if mc_reps < DEFAULT_MC_REPS:
        raise ConfigError(f"q>1 critical values need mc_reps >= {DEFAULT_MC_REPS}")
    rng = np.random.default_rng(seed)
    stats = np.empty(mc_reps)
    chunk = 50_000
    for start in range(0, mc_reps, chunk):
        n = min(chunk, mc_reps - start)
        stats[start : start + n] = np.max(np.abs(sample_null(law, n, rng)), axis=1)
    return float(np.quantile(stats, 1.0 - alpha))


def default_t_min(T: int) -> int:
    return max(30, math.ceil(0.1 * T))


def default_selector(p: int) -> str:
    # smallest root for p=3, largest otherwise
    return "smallest" if p == 3 else "largest"


def selector_index(selector: str | int | None, p: int) -> int:
    selector = default_selector(p) if selector is None else selector
    if selector == "largest":
        return 0
    if selector == "smallest":
        return p - 1
    try:
        idx = int(selector)
    except (TypeError, ValueError):
        raise ConfigError(f"unknown selector {selector!r}; use largest, smallest or an index") from None
    if not 0 <= idx < p:
        raise ConfigError(f"selector index {idx} out of range for p={p}")
    return idx


def _spectra(corrs: np.ndarray, method: str) -> np.ndarray:
    """Descending eigenvalues for a stack of correlation matrices."""
    n, p, _ = corrs.shape
    if method == "closed" and p == 2:
        r = np.abs(corrs[:, 0, 1])
        return np.column_stack([1.0 + r, 1.0 - r])
    if method == "closed" and p == 3:
        return eig3_batch(corrs[:, 0, 1], corrs[:, 0, 2], corrs[:, 1, 2])
    if method not in ("closed", "jacobi"):
        raise ConfigError(f"unknown eigen method {method!r}")
    return np.array([eig_sym(c).values for c in corrs])


def statistic_path(
    obs: np.ndarray,
    t_min: int | None = None,
    selector: str | int | None = None,
    method: str = "closed",
    means: str = "prefix",
    names: Sequence[str] | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (t, h_t, full-sample spectrum) for t = t_min..T.

    ``obs`` is a standardized T x p array. No critical value is computed,
    which keeps this cheap enough for Monte Carlo loops.
    """
    T, p = obs.shape
    t_min = default_t_min(T) if t_min is None else int(t_min)
    if t_min < MIN_BURN_IN:
        raise ConfigError(f"t_min must be at least {MIN_BURN_IN}, got {t_min}")
    if t_min > T:
        raise ConfigError(f"t_min={t_min} exceeds sample length T={T}")
    if p < 2:
        raise ConfigError("need at least two series")
    idx = selector_index(selector, p)

    ts = np.arange(t_min, T + 1)
    corrs = prefix_correlations(obs, ts, means=means, names=names)
    spectra = _spectra(corrs, method)
    d = spectra[:, idx]
    h = np.sqrt(ts) * (d - d[-1])
    return ts, h, spectra[-1]


@dataclass(frozen=True)
class Decision:
    reject: bool
    argmax_t: int
    max_abs_h: float
    critical: float


@dataclass(frozen=True)
class TestTrajectory:
    """h_t over the evaluation window with the test decision."""

    __test__ = False  # keep pytest from collecting this class

    t: np.ndarray
    h: np.ndarray
    t_min: int
    critical: float
    alpha: float
    argmax_t: int
    max_abs_h: float
    reject: bool
    selector: str
    lam: float
    q: int
    spectrum: tuple[float, ...]
    labels: tuple[str, ...] | None = None

    @property
    def points(self) -> list[tuple[int, float]]:
        return [(int(t), float(h)) for t, h in zip(self.t, self.h)]

    @property
    def T(self) -> int:
        return int(self.t[-1])

    @property
    def argmax_label(self) -> str | None:
        if self.labels is None:
            return None
        return self.labels[self.argmax_t - 1]


def _multiplicity(spectrum: np.ndarray, idx: int, gap: float = MULTIPLICITY_GAP) -> int:
    # size of the chain of eigenvalues linked to the selected one by gaps below tolerance
    lo = hi = idx
    while lo > 0 and spectrum[lo - 1] - spectrum[lo] < gap:
        lo -= 1
    while hi < len(spectrum) - 1 and spectrum[hi] - spectrum[hi + 1] < gap:
        hi += 1
    return hi - lo + 1


def _argmax(h: np.ndarray) -> int:
    a = np.abs(h)
    return int(np.flatnonzero(a == a.max())[0])


def trajectory(
    panel: StandardizedPanel,
    alpha: float = 0.05,
    t_min: int | None = None,
    selector: str | int | None = None,
    method: str = "closed",
    means: str = "prefix",
    mc_reps: int = DEFAULT_MC_REPS,
    seed: int = 0,
) -> TestTrajectory:
    """Run the fluctuation test on a standardized panel.

    ``selector`` picks the eigenvalue: the default is the largest for p=2
    and p>3 and the smallest for p=3. ``method="jacobi"`` forces the
    iterative solver instead of the closed forms. ``mc_reps`` and ``seed``
    only matter when the selected eigenvalue is part of a near-tie cluster.
    """
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
    obs = panel.observations
    p = obs.shape[1]
    idx = selector_index(selector, p)
    ts, h, spec = statistic_path(
        obs, t_min=t_min, selector=idx, method=method, means=means, names=panel.names
    )
    lam = float(spec[idx])
    if lam <= 0:
        raise EigenError(f"selected full-sample eigenvalue {lam:.3g} is not positive")
    q = _multiplicity(spec, idx)
    law = NullLaw(lam, q, p)
    crit = critical_value(alpha, law, mc_reps=mc_reps, seed=seed)
    k = _argmax(h)
    max_abs = float(np.abs(h[k]))
    sel_name = {0: "largest", p - 1: "smallest"}.get(idx, str(idx))
    return TestTrajectory(
        t=ts,
        h=h,
        t_min=int(ts[0]),
        critical=crit,
        alpha=alpha,
        argmax_t=int(ts[k]),
        max_abs_h=max_abs,
        reject=max_abs > crit,
        selector=sel_name,
        lam=lam,
        q=q,
        spectrum=tuple(float(v) for v in spec),
        labels=panel.labels,
    )


def decide(traj: TestTrajectory) -> Decision:
    """Reject when max |h_t| exceeds the critical value; ties resolve to the earliest t."""
    if len(traj.h) == 0:
        raise ConfigError("empty trajectory")
    k = _argmax(np.asarray(traj.h))
    m = float(abs(traj.h[k]))
    return Decision(m > traj.critical, int(traj.t[k]), m, float(traj.critical))


def to_json(traj: TestTrajectory) -> dict:
    return {
        "schema": SCHEMA,
        "meta": {
            "alpha": traj.alpha,
            "lambda": traj.lam,
            "q": traj.q,
            "selector": traj.selector,
            "t_min": traj.t_min,
        },
        "points": [[t, h] for t, h in traj.points],
        "critical": traj.critical,
        "reject": traj.reject,
        "argmax_t": traj.argmax_t,
        "argmax_label": traj.argmax_label,
        "max_abs_h": traj.max_abs_h,
    }


def write_json(traj: TestTrajectory, stream: TextIO) -> None:
    json.dump(to_json(traj), stream)
    stream.write("\n")


def write_csv(traj: TestTrajectory, stream: TextIO) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["t", "h", "critical"])
    for t, h in traj.points:
        writer.writerow([t, repr(h), repr(traj.critical)])
