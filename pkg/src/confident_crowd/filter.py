"""Threshold sweep over social weights and extraction of the estimate of the
socially-resistant subgroup.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import EmptyInput, NoFeasibleOmega, NonPositiveEstimate
from .model import Aggregator, aggregate
from .weights import SocialWeight

DEFAULT_OMEGA_MAX = 2.0
DEFAULT_OMEGA_MIN = 0.02
DEFAULT_OMEGA_STEPS = 41


@dataclass(frozen=True)
class OmegaGrid:
    thresholds: tuple[float, ...]

    def __post_init__(self):
        t = tuple(float(x) for x in self.thresholds)
        if not t:
            raise ValueError("omega grid is empty")
        if any(not (x > 0 and math.isfinite(x)) for x in t):
            raise ValueError("omega thresholds must be positive and finite")
        if any(b >= a for a, b in zip(t, t[1:])):
            raise ValueError("omega thresholds must be strictly decreasing")
        object.__setattr__(self, "thresholds", t)

    @classmethod
    def geometric(cls, omega_max: float = DEFAULT_OMEGA_MAX, omega_min: float = DEFAULT_OMEGA_MIN,
                  steps: int = DEFAULT_OMEGA_STEPS) -> "OmegaGrid":
        if steps < 1:
            raise ValueError("steps must be >= 1")
        if steps == 1:
            return cls((omega_max,))
        if not omega_max > omega_min > 0:
            raise ValueError("need omega_max > omega_min > 0")
        return cls(tuple(np.geomspace(omega_max, omega_min, steps).tolist()))

    def __iter__(self):
        return iter(self.thresholds)

    def __len__(self):
        return len(self.thresholds)


@dataclass(frozen=True)
class SweepPoint:
    omega: float
    n_selected: int
    estimate: Optional[float]


@dataclass(frozen=True)
class SweepResult:
    points: tuple[SweepPoint, ...]
    aggregator: Aggregator
    min_n: int

    def __iter__(self):
        return iter(self.points)

    def __len__(self):
        return len(self.points)

    def __getitem__(self, i):
        return self.points[i]


def sweep(
    subjects: Iterable[tuple[float, SocialWeight]],
    grid: OmegaGrid,
    aggregator: "str | Aggregator" = Aggregator.GEOMETRIC_MEAN,
    min_n: int = 1,
) -> SweepResult:
    """Aggregate first estimates of subjects with ``|w| <= omega`` per threshold."""
    subjects = list(subjects)
    if not subjects:
        raise EmptyInput("no subjects to sweep")
    aggregator = Aggregator.parse(aggregator)
    valid = [(x1, w.value) for x1, w in subjects if w.valid]
    x1 = np.array([v[0] for v in valid], dtype=float)
    absw = np.abs(np.array([v[1] for v in valid], dtype=float))
    floor_n = max(1, min_n)

    points = []
    for omega in grid:
        mask = absw <= omega
        n = int(np.count_nonzero(mask))
        est = aggregate(x1[mask], aggregator) if n >= floor_n else None
        points.append(SweepPoint(omega=omega, n_selected=n, estimate=est))
    return SweepResult(points=tuple(points), aggregator=aggregator, min_n=min_n)


class ExtractionMethod(str, Enum):
    SMALLEST_FEASIBLE_OMEGA = "smallest"
    TREND_INTERCEPT = "trend"

    @classmethod
    def parse(cls, value: "str | ExtractionMethod") -> "ExtractionMethod":
        if isinstance(value, ExtractionMethod):
            return value
        aliases = {"smallest_feasible_omega": cls.SMALLEST_FEASIBLE_OMEGA,
                   "trend_intercept": cls.TREND_INTERCEPT}
        return aliases.get(value) or cls(value)


@dataclass(frozen=True)
class ConfidentEstimate:
    value: float
    omega_used: float
    n_used: int
    method: ExtractionMethod
    aggregator: Aggregator


def confident_estimate(
    sweep_result: SweepResult | Sequence[SweepPoint],
    min_n: int = 5,
    method: "str | ExtractionMethod" = ExtractionMethod.SMALLEST_FEASIBLE_OMEGA,
    aggregator: "str | Aggregator | None" = None,
) -> ConfidentEstimate:
    """Single estimate from a sweep.

    ``smallest`` takes the smallest threshold still selecting ``min_n``
    subjects. ``trend`` fits log(estimate) linearly in omega over the feasible
    points, weighted by subjects selected, and reads the line at omega = 0.
    For the trend, ``omega_used``/``n_used`` describe the smallest feasible
    point that entered the fit.
    """
    method = ExtractionMethod.parse(method)
    if aggregator is None:
        aggregator = getattr(sweep_result, "aggregator", Aggregator.GEOMETRIC_MEAN)
    aggregator = Aggregator.parse(aggregator)

    feasible = [p for p in sweep_result if p.estimate is not None and p.n_selected >= min_n]
    if not feasible:
        raise NoFeasibleOmega(f"no threshold selects at least {min_n} subjects")
    smallest = min(feasible, key=lambda p: p.omega)

    if method is ExtractionMethod.SMALLEST_FEASIBLE_OMEGA:
        value = smallest.estimate
    else:
        value = _trend_intercept(feasible)
    return ConfidentEstimate(value=value, omega_used=smallest.omega, n_used=smallest.n_selected,
                             method=method, aggregator=aggregator)


def _trend_intercept(points: Sequence[SweepPoint]) -> float:
    x = np.array([p.omega for p in points])
    y = np.log([p.estimate for p in points])
    w = np.array([p.n_selected for p in points], dtype=float)
    xbar = np.sum(w * x) / np.sum(w)
    ybar = np.sum(w * y) / np.sum(w)
    sxx = np.sum(w * (x - xbar) ** 2)
    if sxx == 0:
        return float(np.exp(ybar))
    slope = np.sum(w * (x - xbar) * (y - ybar)) / sxx
    return float(np.exp(ybar - slope * xbar))


def log_error(estimate: float, truth: float) -> float:
    if not (estimate > 0 and truth > 0):
        raise NonPositiveEstimate(f"log error needs positive inputs, got {estimate!r}, {truth!r}")
    return abs(math.log(estimate / truth))
