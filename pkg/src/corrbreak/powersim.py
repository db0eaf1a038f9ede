"""Monte Carlo power study under piecewise-constant correlation regimes."""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from statistics import NormalDist
from typing import Sequence

import numpy as np
from scipy.special import ndtr

from .changetest import ConfigError, statistic_path
from .panel import ReturnPanel, standardize

PHASE_NULL = 0
PHASE_ALT = 1
MIN_REPS = 500
THREADS_ENV = "CORRBREAK_THREADS"


@dataclass(frozen=True)
class AlternativeSpec:
    """Consecutive segments of (fraction of T, correlation)."""

    segments: tuple[tuple[float, float], ...]

    def __post_init__(self):
        segs = tuple((float(f), float(r)) for f, r in self.segments)
        object.__setattr__(self, "segments", segs)
        if not segs:
            raise ConfigError("an alternative needs at least one segment")
        for f, r in segs:
            if not 0.0 < f <= 1.0:
                raise ConfigError(f"segment fraction {f} outside (0, 1]")
            if not -1.0 <= r <= 1.0:
                raise ConfigError(f"segment correlation {r} outside [-1, 1]")
        total = math.fsum(f for f, _ in segs)
        if abs(total - 1.0) > 1e-12:
            raise ConfigError(f"segment fractions sum to {total}, not 1")

    @property
    def rhos(self) -> tuple[float, ...]:
        return tuple(r for _, r in self.segments)

    @property
    def is_null(self) -> bool:
        return len(set(self.rhos)) == 1

    def boundaries(self, T: int) -> list[int]:
        """End index (exclusive) of each segment for a sample of length T."""
        ends, cum = [], 0.0
        for f, _ in self.segments[:-1]:
            cum += f
            ends.append(int(math.floor(cum * T + 1e-9)))
        ends.append(T)
        return ends

    def null(self) -> "AlternativeSpec":
        """Constant-correlation spec at the first segment's correlation."""
        return AlternativeSpec(((1.0, self.segments[0][1]),))

    @classmethod
    def parse(cls, text: str) -> "AlternativeSpec":
        """Parse ``"0.5:0.5,0.5:0.7"`` (fraction:rho pairs)."""
        try:
            segs = [tuple(float(x) for x in part.split(":")) for part in text.split(",")]
        except ValueError:
            raise ConfigError(f"cannot parse segments {text!r}; expected fraction:rho,...") from None
        if any(len(s) != 2 for s in segs):
            raise ConfigError(f"cannot parse segments {text!r}; expected fraction:rho,...")
        return cls(tuple(segs))


_PRESETS = (
    ((0.5, 0.5), (0.5, 0.7)),
    ((0.25, 0.5), (0.75, 0.7)),
    ((0.5, 0.5), (0.5, -0.5)),
    ((0.25, 0.5), (0.75, -0.5)),
    # the gap between T/4 and T/2 is filled with rho=0.5
    ((0.5, 0.5), (0.25, 0.7), (0.25, 0.5)),
)


def presets() -> list[AlternativeSpec]:
    """The five single- and double-change alternatives, numbered 1..5 in order."""
    return [AlternativeSpec(s) for s in _PRESETS]


def preset(number: int) -> AlternativeSpec:
    if not 1 <= number <= len(_PRESETS):
        raise ConfigError(f"preset must be 1..{len(_PRESETS)}, got {number}")
    return AlternativeSpec(_PRESETS[number - 1])


def replication_rng(seed: int, phase: int, rep: int) -> np.random.Generator:
    """Counter-based stream for replication ``rep`` of ``phase``.

    Streams depend only on (seed, phase, rep), never on execution order.
    """
    ss = np.random.SeedSequence(seed, spawn_key=(phase, rep))
    return np.random.Generator(np.random.Philox(ss))


def _draw(spec: AlternativeSpec, T: int, rng: np.random.Generator) -> np.ndarray:
    x = rng.standard_normal(T)
    z = rng.standard_normal(T)
    y = np.empty(T)
    start = 0
    for (_, rho), end in zip(spec.segments, spec.boundaries(T)):
        y[start:end] = rho * x[start:end] + math.sqrt(1.0 - rho * rho) * z[start:end]
        start = end
    return np.column_stack([x, y])


def _check_samplable(spec: AlternativeSpec, T: int) -> None:
    if T < 20:
        raise ConfigError(f"T must be at least 20, got {T}")
    if any(abs(r) >= 1.0 for r in spec.rhos):
        raise ConfigError("segments with |rho| = 1 are degenerate and cannot be sampled")


def sample_panel(
    spec: AlternativeSpec, T: int, seed: int | np.random.Generator = 0
) -> ReturnPanel:
    """Bivariate Gaussian panel with unit variances and segment-wise correlation."""
    _check_samplable(spec, T)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.Generator(
        np.random.Philox(np.random.SeedSequence(seed))
    )
    return ReturnPanel(_draw(spec, T, rng), ("x", "y"))


def max_statistic(panel: ReturnPanel, t_min: int | None = None, selector=None) -> float:
    """max_t |h_t| of the fluctuation statistic for one panel."""
    _, h, _ = statistic_path(standardize(panel).observations, t_min=t_min, selector=selector)
    return float(np.max(np.abs(h)))


def _max_stats_chunk(args) -> np.ndarray:
    spec, T, seed, phase, reps, t_min, selector = args
    out = np.empty(len(reps))
    for i, r in enumerate(reps):
        panel = ReturnPanel(_draw(spec, T, replication_rng(seed, phase, r)), ("x", "y"))
        out[i] = max_statistic(panel, t_min, selector)
    return out


def worker_count(requested: int | None = None) -> int:
    n = requested if requested is not None else (os.cpu_count() or 1)
    cap = os.environ.get(THREADS_ENV)
    if cap:
        try:
            n = min(n, int(cap))
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {cap!r}") from None
    return max(1, n)


def simulate_max_stats(
    spec: AlternativeSpec,
    T: int,
    n_reps: int,
    seed: int,
    phase: int,
    t_min: int | None = None,
    selector=None,
    workers: int | None = None,
) -> np.ndarray:
    """max_t |h_t| for replications 0..n_reps-1 of one phase, in replication order."""
    _check_samplable(spec, T)
    workers = worker_count(workers)
    reps = np.arange(n_reps)
    if workers == 1 or n_reps < 4 * workers:
        return _max_stats_chunk((spec, T, seed, phase, reps, t_min, selector))
    chunks = np.array_split(reps, 4 * workers)
    jobs = [(spec, T, seed, phase, c, t_min, selector) for c in chunks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return np.concatenate(list(pool.map(_max_stats_chunk, jobs)))


@dataclass(frozen=True)
class PowerResult:
    frequency: float
    critical: float
    n_null: int
    n_alt: int
    alpha: float
    T: int
    seed: int

    @property
    def mc_stderr(self) -> float:
        f = self.frequency
        return math.sqrt(f * (1.0 - f) / self.n_alt)


def power_study(
    spec: AlternativeSpec,
    T: int,
    alpha: float = 0.05,
    n_null: int = 2000,
    n_alt: int = 2000,
    seed: int = 0,
    t_min: int | None = None,
    selector=None,
    workers: int | None = None,
) -> PowerResult:
    """Size-adjusted rejection frequency with the empirical null critical value attached.

    The critical value is the empirical (1 - alpha) quantile of max_t |h_t|
    over ``n_null`` panels with constant correlation equal to the first
    segment's; the frequency is the share of ``n_alt`` panels drawn from
    ``spec`` whose maximum exceeds it. Both phases use the same burn-in and
    eigenvalue selector.
    """
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
    if n_null < MIN_REPS or n_alt < MIN_REPS:
        raise ConfigError(f"need at least {MIN_REPS} replications per phase")
    _check_samplable(spec, T)
    null_stats = simulate_max_stats(spec.null(), T, n_null, seed, PHASE_NULL, t_min, selector, workers)
    crit = float(np.quantile(null_stats, 1.0 - alpha))
    alt_stats = simulate_max_stats(spec, T, n_alt, seed, PHASE_ALT, t_min, selector, workers)
    freq = float(np.count_nonzero(alt_stats > crit)) / n_alt
    return PowerResult(freq, crit, n_null, n_alt, alpha, T, seed)


def size_adjusted_power(
    spec: AlternativeSpec,
    T: int,
    alpha: float = 0.05,
    n_null: int = 2000,
    n_alt: int = 2000,
    seed: int = 0,
    **kwargs,
) -> float:
    return power_study(spec, T, alpha, n_null, n_alt, seed, **kwargs).frequency


@dataclass(frozen=True)
class AnalyticLaw:
    """Normal approximation N(mean, sd^2) for h at the first change point."""

    mean: float
    sd: float

    def __post_init__(self):
        if not self.sd > 0:
            raise ConfigError(f"sd must be positive, got {self.sd}")

    def cdf(self, x):
        return ndtr((np.asarray(x, dtype=float) - self.mean) / self.sd)

    def rejection_probability(self, critical: float) -> float:
        """P(|h| > critical) under this law."""
        nd = NormalDist(self.mean, self.sd)
        return nd.cdf(-critical) + (1.0 - nd.cdf(critical))


def _check_rho(*rhos: float) -> None:
    for r in rhos:
        if not -1.0 <= r <= 1.0:
            raise ConfigError(f"correlation {r} outside [-1, 1]")


def analytic_single_change(t1: int, t2: int, rho1: float, rho2: float) -> AnalyticLaw:
    """Law of h at t1 when correlation moves from rho1 to rho2 after t1 observations.

    Each segment's eigenvalue estimate d_i = 1 + rho_i carries variance
    2 (1 + rho_i)^2 / t_i.
    """
    if t1 < 1 or t2 < 1:
        raise ConfigError("segment lengths must be positive")
    _check_rho(rho1, rho2)
    scale = math.sqrt(t1) * t2 / (t1 + t2)
    mean = scale * (rho1 - rho2)
    sd = scale * math.sqrt((1 + rho1) ** 2 / (0.5 * t1) + (1 + rho2) ** 2 / (0.5 * t2))
    return AnalyticLaw(mean, sd)


def analytic_double_change(
    t1: int,
    t2: int,
    t3: int,
    rho1: float,
    rho2: float,
    rho3: float,
    mode: str = "exact-variance",
) -> AnalyticLaw:
    """Law of h at t1 with two changes, at t1 and t1 + t2.

    ``exact-variance`` accounts for the first segment's estimate appearing in
    both differences. ``paper-literal`` adds the variances of the two
    displayed normal terms as if they were independent.
    """
    if t1 < 1 or t2 < 1 or t3 < 0:
        raise ConfigError("need t1, t2 >= 1 and t3 >= 0")
    _check_rho(rho1, rho2, rho3)
    n = t1 + t2 + t3
    mean = math.sqrt(t1) / n * (t2 * (rho1 - rho2) + t3 * (rho1 - rho3))
    v1 = 2.0 * (1 + rho1) ** 2 / t1
    # t_i^2 * Var(d_i) written as t_i * 2 (1 + rho_i)^2 so that t3 = 0 is harmless
    w2 = 2.0 * t2 * (1 + rho2) ** 2
    w3 = 2.0 * t3 * (1 + rho3) ** 2
    if mode == "exact-variance":
        inner = (t2 + t3) ** 2 * v1 + w2 + w3
    elif mode == "paper-literal":
        inner = (t2 * t2 + t3 * t3) * v1 + w2 + w3
    else:
        raise ConfigError(f"unknown mode {mode!r}; use exact-variance or paper-literal")
    return AnalyticLaw(mean, math.sqrt(t1 * inner) / n)


def analytic_law(spec: AlternativeSpec, T: int, mode: str = "exact-variance") -> AnalyticLaw:
    """Analytic law of h at the first change point of a one- or two-change spec."""
    ends = spec.boundaries(T)
    lengths = np.diff([0, *ends]).tolist()
    rhos = spec.rhos
    if len(rhos) == 2:
        return analytic_single_change(lengths[0], lengths[1], *rhos)
    if len(rhos) == 3:
        return analytic_double_change(*lengths, *rhos, mode=mode)
    raise ConfigError("analytic laws cover specs with two or three segments")


def analytic_power(
    spec: AlternativeSpec, T: int, critical: float, mode: str = "exact-variance"
) -> float:
    """P(|h_{t1}| > critical) under the analytic law of the spec."""
    return analytic_law(spec, T, mode).rejection_probability(critical)


POWER_COLUMNS: Sequence[str] = (
    "T", "alternative", "alpha", "n_null", "n_alt", "frequency", "mc_stderr", "seed",
)
