"""Social signals, log-domain integration of private and social information,
and per-subject social weight recovery.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional

import numpy as np

from .errors import EmptyInput, NoSignalInControl, NonPositiveEstimate
from .model import ArrayLike, Histogram, as_estimates, build_histogram

DEGENERACY_TOL = 1e-9


class Condition(str, Enum):
    CONTROL = "control"
    AGGREGATED_MEAN = "mean"
    FULL_INFORMATION = "full"

    @classmethod
    def parse(cls, value: "str | Condition") -> "Condition":
        if isinstance(value, Condition):
            return value
        return cls(value.strip().lower())


@dataclass(frozen=True)
class SocialSignal:
    mu_s: float
    condition: Condition

    def __post_init__(self):
        if not math.isfinite(self.mu_s):
            raise ValueError(f"social signal must be finite, got {self.mu_s!r}")


class WeightStatus(str, Enum):
    VALID = "valid"
    UNDEFINED_SIGNAL = "undefined_signal"


@dataclass(frozen=True)
class SocialWeight:
    value: Optional[float]
    status: WeightStatus = WeightStatus.VALID

    @property
    def valid(self) -> bool:
        return self.status is WeightStatus.VALID

    @classmethod
    def undefined(cls) -> "SocialWeight":
        return cls(value=None, status=WeightStatus.UNDEFINED_SIGNAL)


@dataclass(frozen=True)
class SubjectResponse:
    x1: float
    x2: float
    signal: SocialSignal

    def __post_init__(self):
        for name in ("x1", "x2"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise NonPositiveEstimate(f"{name} must be positive and finite, got {v!r}")


def social_signal(
    condition: "str | Condition",
    group_trial1: ArrayLike,
    exclude_index: Optional[int] = None,
) -> SocialSignal:
    """Log-domain value of the information shown to a group between trials.

    ``mean`` groups see the arithmetic mean of the group's first estimates
    (own estimate included unless ``exclude_index`` names it); ``full``
    groups see everything, summarized as the mean of the log estimates.
    """
    condition = Condition.parse(condition)
    if condition is Condition.CONTROL:
        raise NoSignalInControl("control groups receive no social information")
    values = np.asarray(group_trial1, dtype=float).reshape(-1)
    if values.size == 0:
        raise EmptyInput("group has no first estimates")
    if exclude_index is not None:
        values = np.delete(values, exclude_index)
    values = as_estimates(values)
    if condition is Condition.AGGREGATED_MEAN:
        mu_s = math.log(float(np.mean(values)))
    else:
        mu_s = float(np.mean(np.log(values)))
    return SocialSignal(mu_s=mu_s, condition=condition)


def second_estimate(x1, mu_s, w_s):
    """Second estimate after combining ``x1`` with the signal in log space."""
    x1a = np.asarray(x1, dtype=float)
    if np.any(~np.isfinite(x1a)) or np.any(x1a <= 0):
        raise NonPositiveEstimate("x1 must be positive and finite")
    out = np.exp((1.0 - np.asarray(w_s, dtype=float)) * np.log(x1a) + np.asarray(w_s, dtype=float) * mu_s)
    return float(out) if out.ndim == 0 else out


def _is_degenerate(log_x1, mu_s, tol):
    scale = np.maximum(1.0, np.maximum(np.abs(mu_s), np.abs(log_x1)))
    return np.abs(mu_s - log_x1) <= tol * scale


def social_weight(resp: SubjectResponse, tol: float = DEGENERACY_TOL) -> SocialWeight:
    log_x1 = math.log(resp.x1)
    mu_s = resp.signal.mu_s
    if _is_degenerate(log_x1, mu_s, tol):
        return SocialWeight.undefined()
    return SocialWeight((math.log(resp.x2) - log_x1) / (mu_s - log_x1))


def social_weight_values(x1: ArrayLike, x2: ArrayLike, mu_s: ArrayLike, tol: float = DEGENERACY_TOL) -> np.ndarray:
    """Vectorized weight recovery; undefined signals come back as NaN."""
    log_x1 = np.log(as_estimates(x1))
    log_x2 = np.log(as_estimates(x2))
    mu_s = np.broadcast_to(np.asarray(mu_s, dtype=float), log_x1.shape)
    bad = _is_degenerate(log_x1, mu_s, tol)
    denom = np.where(bad, 1.0, mu_s - log_x1)
    return np.where(bad, np.nan, (log_x2 - log_x1) / denom)


def weights_from_values(values: Iterable[float]) -> list[SocialWeight]:
    return [SocialWeight.undefined() if math.isnan(v) else SocialWeight(float(v)) for v in values]


def weight_histogram(weights: Iterable[SocialWeight], bin_width: float = 0.1) -> tuple[Histogram, int]:
    """Histogram of valid weights plus the number of excluded (undefined) ones."""
    weights = list(weights)
    valid = [w.value for w in weights if w.valid]
    if not valid:
        raise EmptyInput("no valid social weights")
    return build_histogram(valid, bin_width=bin_width), len(weights) - len(valid)
