"""Seeded synthetic two-trial experiments.

Agents draw a social weight from a spike-and-slab mixture, a first estimate
whose log is biased in proportion to that weight (clamped to [0, 1]), and a
second estimate from the log-domain update. Every group has its own
substream derived from ``(seed, group_index)``, so groups can be generated in
any order with identical results.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .dataset import Dataset, DatasetRow, QuestionRow
from .weights import Condition, second_estimate, social_signal

# Beta(a, a) has variance 1 / (4 (2a + 1)); a = 2.625 gives sd 0.2.
DEFAULT_INTERIOR_SHAPE = 2.625


@dataclass(frozen=True)
class WeightMixture:
    p_zero: float = 0.15
    p_one: float = 0.10
    p_out: float = 0.05
    interior_shape: float = DEFAULT_INTERIOR_SHAPE
    out_width: float = 0.3

    def __post_init__(self):
        for name in ("p_zero", "p_one", "p_out"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {p!r}")
        if self.p_zero + self.p_one + self.p_out > 1.0 + 1e-12:
            raise ValueError("p_zero + p_one + p_out must be <= 1")
        if not self.interior_shape > 0:
            raise ValueError(f"interior_shape must be > 0, got {self.interior_shape!r}")
        if not self.out_width > 0:
            raise ValueError(f"out_width must be > 0, got {self.out_width!r}")

    @property
    def p_interior(self) -> float:
        return max(0.0, 1.0 - self.p_zero - self.p_one - self.p_out)

    def expected_clamped(self) -> float:
        """E[clamp(w, 0, 1)]; out-of-range mass splits evenly below 0 and above 1."""
        return self.p_one + 0.5 * self.p_out + 0.5 * self.p_interior


def draw_weights(mixture: WeightMixture, n: int, rng: np.random.Generator) -> np.ndarray:
    u = rng.random(n)
    interior = rng.beta(mixture.interior_shape, mixture.interior_shape, n)
    s = rng.random(n) * 2.0 * mixture.out_width
    # [-width, 0) for the lower half, (1, 1 + width] for the upper half
    out = np.where(s < mixture.out_width, s - mixture.out_width, 1.0 + (2.0 * mixture.out_width - s))

    c1 = mixture.p_zero
    c2 = c1 + mixture.p_one
    c3 = c2 + mixture.p_out
    return np.select([u < c1, u < c2, u < c3], [0.0, 1.0, out], default=interior)


@dataclass(frozen=True)
class SimConfig:
    truth: float
    sigma_p: float
    bias_slope: float = 0.0
    mixture: WeightMixture = field(default_factory=WeightMixture)
    n_groups: int = 1
    group_size: int = 12
    condition: Condition = Condition.AGGREGATED_MEAN
    seed: int = 0
    control_noise: float = 0.05
    question_id: str = "q1"
    question_text: str = ""

    def __post_init__(self):
        object.__setattr__(self, "condition", Condition.parse(self.condition))
        if not (self.truth > 0 and math.isfinite(self.truth)):
            raise ValueError(f"truth must be > 0, got {self.truth!r}")
        if not (self.sigma_p > 0 and math.isfinite(self.sigma_p)):
            raise ValueError(f"sigma_p must be > 0, got {self.sigma_p!r}")
        if not math.isfinite(self.bias_slope):
            raise ValueError(f"bias_slope must be finite, got {self.bias_slope!r}")
        if self.n_groups < 1:
            raise ValueError(f"n_groups must be >= 1, got {self.n_groups!r}")
        if self.group_size < 2:
            raise ValueError(f"group_size must be >= 2, got {self.group_size!r}")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")
        if self.control_noise < 0:
            raise ValueError(f"control_noise must be >= 0, got {self.control_noise!r}")

    @classmethod
    def with_crowd_bias(cls, log_bias: float, **kwargs) -> "SimConfig":
        """Config whose expected full-crowd log bias equals ``log_bias``."""
        mixture = kwargs.pop("mixture", WeightMixture())
        if mixture.expected_clamped() == 0:
            raise ValueError("crowd_bias cannot be reached: mixture has E[clamp(w, 0, 1)] = 0")
        slope = log_bias / mixture.expected_clamped()
        return cls(bias_slope=slope, mixture=mixture, **kwargs)

    def group_rng(self, group_index: int) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=(group_index,)))

    def as_dict(self) -> dict:
        return {
            "truth": self.truth, "sigma_p": self.sigma_p, "bias_slope": self.bias_slope,
            "p_zero": self.mixture.p_zero, "p_one": self.mixture.p_one, "p_out": self.mixture.p_out,
            "interior_shape": self.mixture.interior_shape, "out_width": self.mixture.out_width,
            "n_groups": self.n_groups, "group_size": self.group_size,
            "condition": self.condition.value, "seed": self.seed,
            "control_noise": self.control_noise,
            "question_id": self.question_id, "question_text": self.question_text,
        }


def draw_first_estimates(config: SimConfig, weights, rng: np.random.Generator) -> np.ndarray:
    w = np.clip(np.asarray(weights, dtype=float), 0.0, 1.0)
    logs = math.log(config.truth) + config.bias_slope * w + config.sigma_p * rng.standard_normal(w.size)
    return np.exp(logs)


@dataclass(frozen=True)
class SimRecord:
    group_id: str
    subject_id: str
    x1: float
    x2: float
    w_true: float
    mu_s: Optional[float]


def group_id(index: int) -> str:
    return f"g{index + 1}"


def simulate_group(config: SimConfig, group_index: int, rng: Optional[np.random.Generator] = None) -> list[SimRecord]:
    rng = config.group_rng(group_index) if rng is None else rng
    w = draw_weights(config.mixture, config.group_size, rng)
    x1 = draw_first_estimates(config, w, rng)
    if config.condition is Condition.CONTROL:
        mu_s = None
        x2 = x1 * np.exp(config.control_noise * config.sigma_p * rng.standard_normal(x1.size))
    else:
        mu_s = social_signal(config.condition, x1).mu_s
        x2 = second_estimate(x1, mu_s, w)
    gid = group_id(group_index)
    return [
        SimRecord(gid, f"s{j + 1}", float(x1[j]), float(x2[j]), float(w[j]), mu_s)
        for j in range(config.group_size)
    ]


@dataclass(frozen=True)
class SyntheticDataset:
    config: SimConfig
    records: tuple[SimRecord, ...]

    @property
    def truth(self) -> float:
        return self.config.truth

    def rows(self) -> list[DatasetRow]:
        c = self.config
        out = []
        for r in self.records:
            out.append(DatasetRow(r.group_id, r.subject_id, c.question_id, c.condition, 1, r.x1))
            out.append(DatasetRow(r.group_id, r.subject_id, c.question_id, c.condition, 2, r.x2))
        return out

    def question(self) -> QuestionRow:
        return QuestionRow(self.config.question_id, self.config.question_text, self.config.truth)

    def weight_rows(self) -> list[tuple[str, str, float]]:
        return [(r.group_id, r.subject_id, r.w_true) for r in self.records]

    def to_dataset(self) -> Dataset:
        q = self.question()
        return Dataset(rows=self.rows(), questions={q.question_id: q})


def simulate_experiment(config: SimConfig) -> SyntheticDataset:
    records: list[SimRecord] = []
    for g in range(config.n_groups):
        records.extend(simulate_group(config, g))
    return SyntheticDataset(config=config, records=tuple(records))


def with_seed(config: SimConfig, seed: int) -> SimConfig:
    return replace(config, seed=seed)
