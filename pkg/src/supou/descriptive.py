"""Empirical moments and distribution diagnostics.

Autocovariances here use the standard time-series divisor n at every lag.
The GMM sample moments in `gmm` follow a different convention (sliding
windows averaged with 1/(N-m)); the two are intentionally distinct.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np
from scipy.special import ndtri

from .errors import DataError, DomainError

__all__ = [
    "SeriesSummary",
    "sample_mean",
    "sample_var",
    "sample_acov",
    "sample_acf",
    "demean",
    "series_summary",
    "normal_qq_points",
    "histogram",
]


def _as_series(x) -> np.ndarray:
    arr = np.ascontiguousarray(x, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise DataError("expected a nonempty 1-d series")
    return arr


def sample_mean(x) -> float:
    return float(_as_series(x).mean())


def sample_var(x) -> float:
    """Sample variance with divisor n."""
    arr = _as_series(x)
    centered = arr - arr.mean()
    return float(centered @ centered) / arr.size


def sample_acov(x, h: int) -> float:
    """Lag-h sample autocovariance with divisor n; h=0 equals sample_var."""
    arr = _as_series(x)
    if h < 0:
        raise DomainError(f"lag must be >= 0, got {h}")
    if arr.size < h + 1:
        raise DataError(f"series of length {arr.size} has no lag-{h} pairs")
    centered = arr - arr.mean()
    if h == 0:
        return float(centered @ centered) / arr.size
    return float(centered[:-h] @ centered[h:]) / arr.size


def sample_acf(x, h: int) -> float:
    v = sample_acov(x, 0)
    if v <= 0.0:
        raise DataError("autocorrelation undefined for a constant series")
    return sample_acov(x, h) / v


def demean(x) -> np.ndarray:
    """Subtract the sample mean; idempotent up to round-off."""
    arr = _as_series(x)
    return arr - arr.mean()


@dataclass(frozen=True)
class SeriesSummary:
    """Empirical mean, variance and autocovariances/-correlations by lag."""

    n: int
    mean: float
    variance: float
    acov: Dict[int, float]
    acf: Dict[int, float]


def series_summary(x, lags: Sequence[int]) -> SeriesSummary:
    arr = _as_series(x)
    acov = {int(h): sample_acov(arr, int(h)) for h in lags}
    v = sample_var(arr)
    if v <= 0.0:
        raise DataError("summary with autocorrelations needs a non-constant series")
    acf = {h: c / v for h, c in acov.items()}
    return SeriesSummary(n=arr.size, mean=sample_mean(arr), variance=v, acov=acov, acf=acf)


def normal_qq_points(x) -> np.ndarray:
    """(theoretical, sample) quantile pairs for a normal QQ plot.

    Sample order statistics are paired with standard-normal quantiles at
    the plotting positions (i - 0.5) / n; output is sorted by the
    theoretical coordinate.
    """
    arr = _as_series(x)
    if arr.size < 2:
        raise DataError("QQ points need at least 2 observations")
    positions = (np.arange(1, arr.size + 1) - 0.5) / arr.size
    theoretical = ndtri(positions)
    return np.column_stack([theoretical, np.sort(arr)])


def histogram(x, bins: int) -> List[Tuple[float, float, int]]:
    """Equal-width histogram over [min, max]; rightmost bin closed.

    A degenerate range (all values equal) is widened by one unit of machine
    epsilon at that magnitude so every observation lands in the first bin.
    """
    arr = _as_series(x)
    if bins < 1:
        raise DomainError(f"bins must be >= 1, got {bins}")
    lo, hi = float(arr.min()), float(arr.max())
    if hi <= lo:
        # widen by one epsilon-at-magnitude per bin so every bin has width
        hi = lo + bins * float(np.spacing(max(abs(lo), 1.0)))
    edges = np.linspace(lo, hi, bins + 1)
    counts, _ = np.histogram(arr, bins=edges)
    return [
        (float(edges[i]), float(edges[i + 1]), int(counts[i])) for i in range(bins)
    ]
