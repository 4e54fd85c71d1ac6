"""Wisdom-of-the-confident estimation: recover per-subject social weights from
before/after estimates and aggregate only the socially resistant subjects."""

from .errors import (
    ConfidentCrowdError,
    DatasetError,
    DegenerateScale,
    EmptyInput,
    InsufficientBins,
    InsufficientData,
    NoFeasibleOmega,
    NonPositiveEstimate,
    NoSignalInControl,
    WeightOutOfRange,
    ZeroVariance,
)
from .filter import ConfidentEstimate, OmegaGrid, SweepPoint, confident_estimate, log_error, sweep
from .model import (
    Aggregator,
    LogNormalParams,
    aggregate,
    build_histogram,
    coverage_band,
    fit_gaussian_frequencies,
    fit_lognormal_mle,
    lognormal_pdf,
    posterior_params,
    standardize_logs,
)
from .sim import SimConfig, WeightMixture, simulate_experiment
from .weights import (
    Condition,
    SocialSignal,
    SocialWeight,
    SubjectResponse,
    second_estimate,
    social_signal,
    social_weight,
    weight_histogram,
)

__version__ = "0.1.0"
