"""Exposure-distribution statistics: skewness, mean, median, cold-start curve."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

METRIC_NAMES = ("views", "clicks", "ctr", "cold_start_latency")


class UndefinedSkewnessError(ValueError):
    pass


def skewness(samples: Sequence[float]) -> float:
    """Fisher-Pearson coefficient ``g1 = m3 / m2**1.5`` (biased central moments)."""
    x = np.asarray(samples, dtype=float)
    if x.size < 3:
        raise UndefinedSkewnessError(f"skewness needs at least 3 samples, got {x.size}")
    d = x - x.mean()
    m2 = np.mean(d * d)
    # relative threshold: values equal up to rounding have no spread
    if m2 <= (np.finfo(float).eps * max(1.0, float(np.abs(x).max()))) ** 2:
        raise UndefinedSkewnessError("skewness is undefined for zero-variance samples")
    m3 = np.mean(d * d * d)
    return float(m3 / m2**1.5)


def lower_median(samples: Sequence[float]) -> float:
    """Median; for even counts, the lower of the two middle values."""
    x = np.sort(np.asarray(samples, dtype=float))
    if x.size == 0:
        raise ValueError("median of an empty sample")
    return float(x[(x.size - 1) // 2])


@dataclass(frozen=True)
class DistributionReport:
    metric: str
    skewness: float | None
    mean: float
    median: float
    sample_count: int
    excluded: int = 0

    @property
    def skewness_defined(self) -> bool:
        return self.skewness is not None

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "skewness": self.skewness,
            "mean": self.mean,
            "median": self.median,
            "sample_count": self.sample_count,
            "excluded": self.excluded,
        }


def distribution_report(values: Sequence[float], metric: str, excluded: int = 0) -> DistributionReport:
    """Skewness, mean and median of per-item values.

    An undefined skewness (fewer than three values or no spread) is reported
    as ``None`` rather than raised, so a report can always be produced.
    """
    if metric not in METRIC_NAMES:
        raise ValueError(f"unknown metric {metric!r}; expected one of {METRIC_NAMES}")
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        raise ValueError(f"no samples for metric {metric!r}")
    try:
        g1 = skewness(x)
    except UndefinedSkewnessError:
        g1 = None
    return DistributionReport(metric, g1, float(x.mean()), lower_median(x), int(x.size), excluded)


def ctr_report(views: Sequence[int], clicks: Sequence[int], min_views: int = 1) -> DistributionReport:
    """Per-item CTR distribution; items under ``min_views`` are dropped and counted."""
    v = np.asarray(views, dtype=float)
    c = np.asarray(clicks, dtype=float)
    keep = v >= max(min_views, 1)
    return distribution_report(c[keep] / v[keep], "ctr", excluded=int(np.count_nonzero(~keep)))


def cold_start_latencies(first_impression: Sequence[int | None], arrival: Sequence[int]) -> np.ndarray:
    """Rounds from arrival to first impression for items that were shown."""
    return np.array(
        [f - a for f, a in zip(first_impression, arrival) if f is not None and f >= 0],
        dtype=float,
    )


@dataclass(frozen=True)
class ColdStartCurve:
    """Fraction of items first shown within ``w * horizon`` rounds of arriving."""

    fractions: Mapping[float, float] = field(default_factory=dict)

    def __getitem__(self, window: float) -> float:
        return self.fractions[window]

    @property
    def windows(self) -> list[float]:
        return sorted(self.fractions)

    def to_dict(self) -> dict:
        return {str(w): self.fractions[w] for w in self.windows}


def cold_start_curve(
    first_impression: Sequence[int | None],
    arrival: Sequence[int],
    horizon: int,
    windows: Sequence[float] = (0.05, 0.1, 0.25, 0.5, 1.0),
) -> ColdStartCurve:
    """Cold-start exposure curve.

    ``first_impression[i]`` is the first round item ``i`` was shown, or
    ``None`` (or a negative number) if it never was; never-shown items count
    against every window.
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    if len(first_impression) != len(arrival):
        raise ValueError("first_impression and arrival must align")
    n = len(arrival)
    lat = np.array(
        [np.inf if f is None or f < 0 else f - a for f, a in zip(first_impression, arrival)],
        dtype=float,
    )
    fractions = {}
    for w in sorted(windows):
        fractions[float(w)] = float(np.count_nonzero(lat <= w * horizon) / n) if n else 0.0
    return ColdStartCurve(fractions)
