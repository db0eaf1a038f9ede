"""Return panels: CSV ingestion, standardization and prefix correlations."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from datetime import date, datetime
from pathlib import Path
from typing import Iterable, Sequence, TextIO

import numpy as np

# Centered sum of squares per observation below which a prefix column counts as constant.
DEGENERATE_TOL = 1e-12

RETURN_MODES = ("as-is", "log-diff", "pct-diff")
MEAN_MODES = ("prefix", "full")


class PanelError(ValueError):
    """Raised when a panel fails to parse or violates its invariants."""


class DegeneratePrefixError(PanelError):
    """A column has zero variance on the prefix window."""

    def __init__(self, column: str, k: int):
        super().__init__(f"column {column!r} is constant on prefix 1..{k}")
        self.column = column
        self.k = k


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


def _parse_label(text: str) -> datetime:
    try:
        return datetime.fromisoformat(text)
    except ValueError:
        return datetime.combine(date.fromisoformat(text), datetime.min.time())


@dataclass(frozen=True)
class ReturnPanel:
    """T x p matrix of returns with column names and optional ISO-8601 time labels."""

    observations: np.ndarray
    names: tuple[str, ...]
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        obs = _readonly(self.observations)
        object.__setattr__(self, "observations", obs)
        object.__setattr__(self, "names", tuple(str(n) for n in self.names))
        if self.labels is not None:
            object.__setattr__(self, "labels", tuple(str(s) for s in self.labels))

        if obs.ndim != 2:
            raise PanelError(f"observations must be 2-D, got shape {obs.shape}")
        T, p = obs.shape
        if T < 2:
            raise PanelError(f"need at least 2 observations, got {T}")
        if p < 2:
            raise PanelError(f"need at least 2 numeric columns, got {p}")
        if len(self.names) != p:
            raise PanelError(f"{len(self.names)} names for {p} columns")
        bad = np.argwhere(~np.isfinite(obs))
        if bad.size:
            r, c = bad[0]
            raise PanelError(f"non-finite value at row {r + 1}, column {self.names[c]!r}")
        for j in range(p):
            if np.all(obs[:, j] == obs[0, j]):
                raise PanelError(f"column {self.names[j]!r} is constant (zero variance)")
        if self.labels is not None:
            if len(self.labels) != T:
                raise PanelError(f"{len(self.labels)} labels for {T} observations")
            try:
                stamps = [_parse_label(s) for s in self.labels]
            except ValueError as exc:
                raise PanelError(f"time label is not ISO-8601: {exc}") from None
            for i in range(1, T):
                if stamps[i] <= stamps[i - 1]:
                    raise PanelError(
                        f"time labels not strictly increasing at row {i + 1} "
                        f"({self.labels[i - 1]} -> {self.labels[i]})"
                    )

    @property
    def T(self) -> int:
        return self.observations.shape[0]

    @property
    def p(self) -> int:
        return self.observations.shape[1]


@dataclass(frozen=True)
class StandardizedPanel:
    """Panel with every column centered and scaled by full-sample moments.

    ``means`` and ``scales`` record the transformation; ``scales`` use the
    denominator-T standard deviation.
    """

    observations: np.ndarray
    names: tuple[str, ...]
    labels: tuple[str, ...] | None = None
    means: np.ndarray = field(default=None, repr=False)
    scales: np.ndarray = field(default=None, repr=False)
    source: str = "full-sample"

    def __post_init__(self):
        object.__setattr__(self, "observations", _readonly(self.observations))
        if self.means is not None:
            object.__setattr__(self, "means", _readonly(self.means))
        if self.scales is not None:
            object.__setattr__(self, "scales", _readonly(self.scales))

    @property
    def T(self) -> int:
        return self.observations.shape[0]

    @property
    def p(self) -> int:
        return self.observations.shape[1]


@dataclass(frozen=True)
class CorrelationMatrix:
    """Sample correlation matrix of observations ``1..window_end``."""

    entries: np.ndarray
    window_end: int

    def __post_init__(self):
        object.__setattr__(self, "entries", _readonly(self.entries))

    @property
    def p(self) -> int:
        return self.entries.shape[0]

    def __getitem__(self, ij):
        return self.entries[ij]


def load_panel(source: TextIO | str | Path) -> ReturnPanel:
    """Parse a CSV panel.

    The first row is a header. A leading column whose header is ``date``
    (any case) is taken as ISO-8601 time labels; every other column must be
    numeric. Accepts an open text stream or a filesystem path.
    """
    if isinstance(source, (str, Path)):
        with open(source, newline="", encoding="utf-8-sig") as fh:
            return load_panel(fh)

    reader = csv.reader(source)
    try:
        header = next(reader)
    except StopIteration:
        raise PanelError("empty CSV input") from None
    header = [h.strip().lstrip("\ufeff") for h in header]

    has_dates = bool(header) and header[0].lower() == "date"
    names = header[1:] if has_dates else header
    if len(names) < 2:
        raise PanelError(f"need at least 2 numeric columns, found {len(names)}")

    rows: list[list[float]] = []
    labels: list[str] = []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(header):
            raise PanelError(
                f"line {lineno}: expected {len(header)} fields, got {len(row)}"
            )
        cells = row
        if has_dates:
            labels.append(row[0].strip())
            cells = row[1:]
        values = []
        for name, cell in zip(names, cells):
            text = cell.strip()
            try:
                values.append(float(text))
            except ValueError:
                raise PanelError(
                    f"line {lineno}, column {name!r}: cannot parse {text!r} as a number"
                ) from None
            if not math.isfinite(values[-1]):
                raise PanelError(f"line {lineno}, column {name!r}: non-finite value {text!r}")
        rows.append(values)

    if len(rows) < 2:
        raise PanelError(f"need at least 2 data rows, found {len(rows)}")
    return ReturnPanel(np.array(rows), tuple(names), tuple(labels) if has_dates else None)


def loads_panel(text: str) -> ReturnPanel:
    return load_panel(io.StringIO(text))


def write_panel(panel: ReturnPanel, stream: TextIO) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    if panel.labels is not None:
        writer.writerow(["date", *panel.names])
        for label, row in zip(panel.labels, panel.observations):
            writer.writerow([label, *(repr(float(v)) for v in row)])
    else:
        writer.writerow(panel.names)
        for row in panel.observations:
            writer.writerow([repr(float(v)) for v in row])


def to_returns(panel: ReturnPanel, mode: str = "as-is") -> ReturnPanel:
    """Difference price levels into returns.

    ``log-diff`` gives log(P_t / P_{t-1}), ``pct-diff`` gives P_t / P_{t-1} - 1.
    The first observation (and its label) is dropped.
    """
    if mode == "as-is":
        return panel
    if mode not in RETURN_MODES:
        raise PanelError(f"unknown returns mode {mode!r}; expected one of {RETURN_MODES}")
    levels = panel.observations
    if np.any(levels <= 0):
        raise PanelError(f"{mode} needs strictly positive price levels")
    if mode == "log-diff":
        rets = np.diff(np.log(levels), axis=0)
    else:
        rets = levels[1:] / levels[:-1] - 1.0
    labels = panel.labels[1:] if panel.labels is not None else None
    return ReturnPanel(rets, panel.names, labels)


def standardize(panel: ReturnPanel) -> StandardizedPanel:
    """Center and scale each column by its full-sample mean and denominator-T sd."""
    obs = panel.observations
    means = obs.mean(axis=0)
    centered = obs - means
    scales = np.sqrt(np.mean(centered**2, axis=0))
    for j, s in enumerate(scales):
        if not s > 0:
            raise PanelError(f"column {panel.names[j]!r} has zero variance")
    return StandardizedPanel(
        centered / scales, panel.names, panel.labels, means=means, scales=scales
    )


def _as_matrix(panel) -> tuple[np.ndarray, Sequence[str]]:
    if isinstance(panel, (ReturnPanel, StandardizedPanel)):
        return panel.observations, panel.names
    obs = np.asarray(panel, dtype=float)
    return obs, [str(j) for j in range(obs.shape[1])]


def _finish(cov: np.ndarray, ss: np.ndarray, names: Sequence[str], k: int) -> np.ndarray:
    for j, s in enumerate(ss):
        if s <= DEGENERATE_TOL * k:
            raise DegeneratePrefixError(names[j], k)
    scale = np.sqrt(ss)
    corr = cov / np.outer(scale, scale)
    corr = np.clip(0.5 * (corr + corr.T), -1.0, 1.0)
    np.fill_diagonal(corr, 1.0)
    return corr


def prefix_correlation(panel, k: int, means: str = "prefix") -> CorrelationMatrix:
    """Correlation matrix of observations ``1..k``.

    With ``means="prefix"`` deviations are taken from the prefix means
    (the usual sample correlation of the window). ``means="full"`` uses the
    full-sample means instead, which for a standardized panel are zero.
    """
    obs, names = _as_matrix(panel)
    T = obs.shape[0]
    if not 2 <= k <= T:
        raise PanelError(f"prefix length k={k} outside [2, {T}]")
    if means not in MEAN_MODES:
        raise PanelError(f"unknown means mode {means!r}; expected one of {MEAN_MODES}")
    window = obs[:k]
    center = window.mean(axis=0) if means == "prefix" else obs.mean(axis=0)
    dev = window - center
    cov = dev.T @ dev
    return CorrelationMatrix(_finish(cov, np.diag(cov).copy(), names, k), k)


def prefix_correlations(
    panel,
    ks: Iterable[int] | None = None,
    means: str = "prefix",
    names: Sequence[str] | None = None,
) -> np.ndarray:
    """Stack of prefix correlation matrices, one per window length in ``ks``.

    Uses running sums, so all windows cost O(T p^2) together. Returns an
    array of shape ``(len(ks), p, p)``; ``ks`` defaults to ``2..T``.
    """
    obs, default_names = _as_matrix(panel)
    names = default_names if names is None else list(names)
    T, p = obs.shape
    ks = np.arange(2, T + 1) if ks is None else np.asarray(list(ks), dtype=int)
    if ks.size and (ks.min() < 2 or ks.max() > T):
        raise PanelError(f"prefix lengths must lie in [2, {T}]")
    if means not in MEAN_MODES:
        raise PanelError(f"unknown means mode {means!r}; expected one of {MEAN_MODES}")

    if means == "full":
        obs = obs - obs.mean(axis=0)
    idx = ks - 1
    kf = ks.astype(float)[:, None, None]
    cross = np.cumsum(obs[:, :, None] * obs[:, None, :], axis=0)[idx]
    if means == "prefix":
        sums = np.cumsum(obs, axis=0)[idx]
        cross = cross - sums[:, :, None] * sums[:, None, :] / kf
    ss = np.diagonal(cross, axis1=1, axis2=2)

    for j in range(p):
        bad = np.nonzero(ss[:, j] <= DEGENERATE_TOL * ks)[0]
        if bad.size:
            raise DegeneratePrefixError(names[j], int(ks[bad[-1]]))

    scale = np.sqrt(ss)
    corr = cross / (scale[:, :, None] * scale[:, None, :])
    corr = np.clip(0.5 * (corr + np.swapaxes(corr, 1, 2)), -1.0, 1.0)
    diag = np.arange(p)
    corr[:, diag, diag] = 1.0
    return corr


def full_correlation(panel) -> CorrelationMatrix:
    obs, _ = _as_matrix(panel)
    return prefix_correlation(panel, obs.shape[0])
