"""Log-normal crowd primitives: densities, aggregators, standardization,
fixed-width histograms, Gaussian frequency fits and binomial coverage bands.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence, Union

import numpy as np
from scipy import optimize, stats

from .errors import (
    DegenerateScale,
    EmptyInput,
    InsufficientBins,
    InsufficientData,
    NonPositiveEstimate,
    WeightOutOfRange,
    ZeroVariance,
)

ArrayLike = Union[Sequence[float], np.ndarray]

SQRT_2PI = math.sqrt(2.0 * math.pi)


class Aggregator(str, Enum):
    ARITHMETIC_MEAN = "arithmetic_mean"
    MEDIAN = "median"
    GEOMETRIC_MEAN = "geometric_mean"

    @classmethod
    def parse(cls, value: "str | Aggregator") -> "Aggregator":
        if isinstance(value, Aggregator):
            return value
        aliases = {"mean": cls.ARITHMETIC_MEAN, "geomean": cls.GEOMETRIC_MEAN}
        if value in aliases:
            return aliases[value]
        return cls(value)


def as_estimates(values: ArrayLike) -> np.ndarray:
    """Validate a collection of estimates and return it as a float array."""
    arr = np.asarray(values, dtype=float).reshape(-1)
    if arr.size == 0:
        raise EmptyInput("no estimates given")
    if not np.all(np.isfinite(arr)):
        raise NonPositiveEstimate("estimates must be finite")
    if np.any(arr <= 0):
        raise NonPositiveEstimate(f"estimates must be > 0, got min {arr.min()!r}")
    return arr


@dataclass(frozen=True)
class LogNormalParams:
    mu: float
    sigma: float

    def __post_init__(self):
        if not (self.sigma >= 0):
            raise DegenerateScale(f"sigma must be >= 0, got {self.sigma!r}")

    def median(self) -> float:
        return math.exp(self.mu)


def lognormal_pdf(x, params: LogNormalParams):
    """Density of a log-normal population at ``x`` (scalar or array)."""
    if params.sigma == 0:
        raise DegenerateScale("log-normal density undefined for sigma = 0")
    xa = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(xa)) or np.any(xa <= 0):
        raise NonPositiveEstimate("x must be positive and finite")
    z = (np.log(xa) - params.mu) / params.sigma
    out = np.exp(-0.5 * z * z) / (xa * params.sigma * SQRT_2PI)
    return float(out) if out.ndim == 0 else out


def _mean(values: np.ndarray) -> float:
    return float(np.mean(values))


def aggregate(values: ArrayLike, method: "str | Aggregator" = Aggregator.GEOMETRIC_MEAN) -> float:
    arr = as_estimates(values)
    method = Aggregator.parse(method)
    if method is Aggregator.ARITHMETIC_MEAN:
        return _mean(arr)
    if method is Aggregator.MEDIAN:
        return float(np.median(arr))
    return math.exp(_mean(np.log(arr)))


@dataclass(frozen=True)
class StandardizedSample:
    zscores: np.ndarray
    source_mu: float
    source_sd: float

    def inverse(self, z: ArrayLike | None = None) -> np.ndarray:
        """Map z-scores back to the estimate scale."""
        z = self.zscores if z is None else np.asarray(z, dtype=float)
        return np.exp(self.source_mu + z * self.source_sd)

    def apply(self, values: ArrayLike) -> np.ndarray:
        """Standardize other estimates with this sample's log mean and sd."""
        return (np.log(as_estimates(values)) - self.source_mu) / self.source_sd


def _log_moments(values: ArrayLike) -> tuple[float, float]:
    arr = as_estimates(values)
    if arr.size < 2:
        raise InsufficientData(f"need at least 2 estimates, got {arr.size}")
    logs = np.log(arr)
    if np.all(logs == logs[0]):
        raise ZeroVariance("all estimates are equal")
    return _mean(logs), float(np.std(logs, ddof=1))


def standardize_logs(values: ArrayLike) -> StandardizedSample:
    mu, sd = _log_moments(values)
    z = (np.log(as_estimates(values)) - mu) / sd
    return StandardizedSample(zscores=z, source_mu=mu, source_sd=sd)


def fit_lognormal_mle(values: ArrayLike) -> LogNormalParams:
    """Log-domain mean and sample (n-1) standard deviation."""
    mu, sd = _log_moments(values)
    return LogNormalParams(mu=mu, sigma=sd)


@dataclass(frozen=True)
class Histogram:
    """Fixed-width histogram with a bin edge at 0.

    Bins are half-open ``[left, left + bin_width)`` and contiguous from the
    bin holding the smallest sample to the one holding the largest.
    """

    bin_width: float
    first_index: int
    counts: np.ndarray
    n: int
    origin: float = 0.0

    @property
    def lefts(self) -> np.ndarray:
        return self.origin + (self.first_index + np.arange(self.counts.size)) * self.bin_width

    @property
    def edges(self) -> np.ndarray:
        k = self.first_index + np.arange(self.counts.size + 1)
        return self.origin + k * self.bin_width

    @property
    def centers(self) -> np.ndarray:
        return self.lefts + 0.5 * self.bin_width

    @property
    def frequencies(self) -> np.ndarray:
        return self.counts / self.n

    @property
    def bins(self) -> list[tuple[float, float]]:
        return list(zip(self.lefts.tolist(), self.frequencies.tolist()))

    def frequency_at(self, value: float) -> float:
        """Frequency of the bin that would hold ``value`` (0 outside range)."""
        k = int(_bin_index(np.array([value]), self.bin_width)[0]) - self.first_index
        if 0 <= k < self.counts.size:
            return float(self.counts[k] / self.n)
        return 0.0


def _bin_index(values: np.ndarray, width: float) -> np.ndarray:
    # Edges are k * width; correct floor() round-off against those exact edges.
    k = np.floor(values / width).astype(np.int64)
    k = np.where(values < k * width, k - 1, k)
    k = np.where(values >= (k + 1) * width, k + 1, k)
    return k


def build_histogram(zscores: ArrayLike, bin_width: float = 0.2) -> Histogram:
    z = np.asarray(zscores, dtype=float).reshape(-1)
    if z.size == 0:
        raise EmptyInput("cannot histogram an empty sample")
    if not bin_width > 0:
        raise ValueError(f"bin_width must be > 0, got {bin_width!r}")
    if not np.all(np.isfinite(z)):
        raise ValueError("histogram input must be finite")
    k = _bin_index(z, bin_width)
    k0 = int(k.min())
    counts = np.bincount(k - k0, minlength=int(k.max()) - k0 + 1)
    return Histogram(bin_width=float(bin_width), first_index=k0, counts=counts, n=int(z.size))


@dataclass(frozen=True)
class GaussianFit:
    mu: float
    sigma: float
    residual: float

    def bin_masses(self, edges: ArrayLike) -> np.ndarray:
        return np.diff(stats.norm.cdf(np.asarray(edges, dtype=float), self.mu, self.sigma))

    def curve(self, z: ArrayLike, bin_width: float) -> np.ndarray:
        """Expected frequency density per bin of ``bin_width`` (plotting)."""
        return bin_width * stats.norm.pdf(np.asarray(z, dtype=float), self.mu, self.sigma)


def fit_gaussian_frequencies(hist: Histogram) -> GaussianFit:
    """Unweighted least-squares Gaussian fit to histogram frequencies.

    The model for each bin is its Gaussian probability mass, so noiseless
    frequencies generated from a Gaussian are recovered exactly rather than
    with the midpoint-rule bias of ``bin_width * pdf(center)``.
    """
    nonempty = int(np.count_nonzero(hist.counts))
    if nonempty < 3:
        raise InsufficientBins(f"need >= 3 non-empty bins, got {nonempty}")
    edges = hist.edges
    freqs = hist.frequencies
    centers = hist.centers

    m0 = float(np.sum(centers * freqs))
    s0 = float(np.sqrt(max(np.sum(freqs * (centers - m0) ** 2), hist.bin_width ** 2)))
    span = float(edges[-1] - edges[0])

    def resid(p):
        return np.diff(stats.norm.cdf(edges, p[0], p[1])) - freqs

    lo = [edges[0] - span, 1e-6 * hist.bin_width]
    hi = [edges[-1] + span, 10.0 * span]
    sol = optimize.least_squares(
        resid, x0=[m0, min(max(s0, lo[1]), hi[1])], bounds=(lo, hi),
        xtol=1e-14, ftol=1e-14, gtol=1e-14,
    )
    mu, sigma = (float(v) for v in sol.x)
    return GaussianFit(mu=mu, sigma=sigma, residual=float(np.sum(resid(sol.x) ** 2)))


@dataclass(frozen=True)
class CoverageBand:
    lefts: np.ndarray
    low: np.ndarray
    high: np.ndarray
    coverage: float

    def contains(self, frequencies: ArrayLike) -> np.ndarray:
        f = np.asarray(frequencies, dtype=float)
        return (f >= self.low) & (f <= self.high)


def coverage_band(fit: GaussianFit, edges: "ArrayLike | Histogram", n: int, coverage: float = 0.9) -> CoverageBand:
    """Per-bin frequency interval expected to hold ``coverage`` of experiments.

    Each bin count is Binomial(n, p) with p the bin's mass under ``fit``; the
    interval spans its lower and upper ``(1 - coverage) / 2`` quantiles.
    """
    if isinstance(edges, Histogram):
        edges = edges.edges
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if not 0 < coverage < 1:
        raise ValueError(f"coverage must be in (0, 1), got {coverage}")
    edges = np.asarray(edges, dtype=float)
    p = np.clip(fit.bin_masses(edges), 0.0, 1.0)
    tail = (1.0 - coverage) / 2.0
    q_lo = stats.binom.ppf(tail, n, p)
    q_hi = stats.binom.ppf(1.0 - tail, n, p)
    return CoverageBand(lefts=edges[:-1], low=q_lo / n, high=q_hi / n, coverage=coverage)


def posterior_params(private: LogNormalParams, mu_s: float, w_s: float) -> LogNormalParams:
    """Post-influence log-normal parameters for social weight ``w_s``."""
    if not 0.0 <= w_s <= 1.0:
        raise WeightOutOfRange(f"w_s must be in [0, 1], got {w_s!r}")
    w_p = 1.0 - w_s
    return LogNormalParams(mu=w_p * private.mu + w_s * mu_s, sigma=math.sqrt(w_p) * private.sigma)
