"""Per-question analysis pipeline, report rendering and plot-data emission."""
from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .dataset import SWEEP_HEADER, Dataset, Subject, _csv_text, write_text_atomic
from .errors import ConfidentCrowdError, NoFeasibleOmega, NoSignalInControl
from .filter import (
    ConfidentEstimate,
    ExtractionMethod,
    OmegaGrid,
    SweepResult,
    confident_estimate,
    log_error,
    sweep,
)
from .model import (
    Aggregator,
    CoverageBand,
    GaussianFit,
    Histogram,
    aggregate,
    build_histogram,
    coverage_band,
    fit_gaussian_frequencies,
    fit_lognormal_mle,
    standardize_logs,
)
from .weights import Condition, SocialWeight, SubjectResponse, social_signal, social_weight, weight_histogram

log = logging.getLogger(__name__)

SIG_DIGITS = 9
CROWD_AGGREGATORS = (Aggregator.ARITHMETIC_MEAN, Aggregator.MEDIAN, Aggregator.GEOMETRIC_MEAN)
SWEEP_AGGREGATORS = (Aggregator.GEOMETRIC_MEAN, Aggregator.MEDIAN)


@dataclass(frozen=True)
class AnalysisOptions:
    grid: OmegaGrid = field(default_factory=OmegaGrid.geometric)
    min_n: int = 5
    aggregator: Aggregator = Aggregator.GEOMETRIC_MEAN
    method: ExtractionMethod = ExtractionMethod.SMALLEST_FEASIBLE_OMEGA
    per_group: bool = False
    hist_width: float = 0.2
    weight_bin_width: float = 0.1
    coverage: float = 0.9


@dataclass
class WeightTable:
    """Social weights for one question, pooled across groups."""

    x1: list[float] = field(default_factory=list)
    weights: list[SocialWeight] = field(default_factory=list)
    subjects: list[Subject] = field(default_factory=list)
    signals: dict[str, float] = field(default_factory=dict)
    no_signal: int = 0
    missing_trial: int = 0

    @property
    def n_valid(self) -> int:
        return sum(w.valid for w in self.weights)

    @property
    def n_undefined(self) -> int:
        return len(self.weights) - self.n_valid

    def pairs(self) -> list[tuple[float, SocialWeight]]:
        return list(zip(self.x1, self.weights))


def pooled_weights(groups: dict[str, list[Subject]]) -> WeightTable:
    """Recover each subject's weight from its group's signal.

    Control groups contribute no weights; subjects lacking trial 1 or 2 are
    counted but skipped.
    """
    table = WeightTable()
    for gid, members in groups.items():
        condition = members[0].condition
        firsts = [m.x1 for m in members if m.x1 is not None]
        if condition is Condition.CONTROL or not firsts:
            table.no_signal += len(members)
            continue
        signal = social_signal(condition, firsts)
        table.signals[gid] = signal.mu_s
        for m in members:
            if m.x1 is None or m.x2 is None:
                table.missing_trial += 1
                continue
            table.x1.append(m.x1)
            table.weights.append(social_weight(SubjectResponse(m.x1, m.x2, signal)))
            table.subjects.append(m)
    return table


@dataclass
class HistPanel:
    label: tuple[str, str]
    hist: Histogram
    fit: Optional[GaussianFit]
    band: Optional[CoverageBand]


def _panel(label, z, width, coverage, notes) -> Optional[HistPanel]:
    if len(z) == 0:
        return None
    hist = build_histogram(z, bin_width=width)
    fit = band = None
    try:
        fit = fit_gaussian_frequencies(hist)
        band = coverage_band(fit, hist, hist.n, coverage)
    except ConfidentCrowdError as exc:
        notes.append(f"{label[0]}/{label[1]}: no Gaussian fit ({type(exc).__name__}: {exc})")
    return HistPanel(label, hist, fit, band)


def _panel_summary(p: HistPanel) -> dict:
    out = {"n": p.hist.n, "bin_width": p.hist.bin_width, "bins": int(p.hist.counts.size)}
    if p.fit is not None:
        out["fit"] = {"mu": p.fit.mu, "sigma": p.fit.sigma, "residual": p.fit.residual}
        inside = p.band.contains(p.hist.frequencies)
        out["band"] = {"coverage": p.band.coverage, "bins_inside": int(np.count_nonzero(inside))}
    else:
        out["fit"] = None
    return out


def standardized_panels(subjects: list[Subject], options: AnalysisOptions, notes: list[str]):
    """Trial-1 and trial-2 z-scores per condition.

    Both trials use the log mean/sd of all trial-1 estimates of the question,
    so the post-influence shift and narrowing stay visible.
    Returns ``(panels, zscores)`` where zscores maps (condition, trial) to arrays.
    """
    x1_all = [s.x1 for s in subjects if s.x1 is not None]
    try:
        std = standardize_logs(x1_all)
    except ConfidentCrowdError as exc:
        notes.append(f"fig1: cannot standardize trial-1 estimates ({type(exc).__name__}: {exc})")
        return [], {}
    panels, zs = [], {}
    for cond in Condition:
        members = [s for s in subjects if s.condition is cond]
        for trial, vals in (("trial1", [s.x1 for s in members if s.x1 is not None]),
                            ("trial2", [s.x2 for s in members if s.x2 is not None])):
            if not vals:
                continue
            z = std.apply(vals)
            zs[(cond.value, trial)] = z
            panel = _panel((cond.value, trial), z, options.hist_width, options.coverage, notes)
            panels.append(panel)
    return panels, zs


def _confident_block(sweeps: dict[Aggregator, SweepResult], min_n: int, truth: Optional[float]) -> list[dict]:
    out = []
    for agg, res in sweeps.items():
        for method in ExtractionMethod:
            ce = confident_estimate(res, min_n=min_n, method=method)
            out.append(_ce_dict(ce, truth))
    return out


def _ce_dict(ce: ConfidentEstimate, truth: Optional[float]) -> dict:
    d = {"method": ce.method.value, "aggregator": ce.aggregator.value, "value": ce.value,
         "omega_used": ce.omega_used, "n_used": ce.n_used}
    if truth is not None:
        d["log_error"] = log_error(ce.value, truth)
    return d


def sweep_rows(sweeps: dict[Aggregator, SweepResult]) -> list[dict]:
    geo, med = sweeps[Aggregator.GEOMETRIC_MEAN], sweeps[Aggregator.MEDIAN]
    return [
        {"omega": g.omega, "n_selected": g.n_selected, "estimate_geomean": g.estimate, "estimate_median": m.estimate}
        for g, m in zip(geo, med)
    ]


@dataclass
class QuestionResult:
    question_id: str
    report: dict
    panels: list[HistPanel]
    zscores: dict
    weight_hist: Optional[Histogram]
    sweep_rows: list[dict]


def analyze_question(dataset: Dataset, question_id: str, options: AnalysisOptions) -> QuestionResult:
    q = dataset.questions[question_id]
    truth = q.truth
    groups = dataset.groups(question_id)
    subjects = [s for members in groups.values() for s in members]
    notes: list[str] = []

    rep: dict = {"question_id": q.question_id, "text": q.text, "truth": truth,
                 "n_groups": len(groups), "n_subjects": len(subjects)}
    rep["conditions"] = {c.value: sum(s.condition is c for s in subjects) for c in Condition}

    x1_all = [s.x1 for s in subjects if s.x1 is not None]
    crowd = {"n": len(x1_all)}
    for agg in CROWD_AGGREGATORS:
        crowd[agg.value] = aggregate(x1_all, agg) if x1_all else None
    rep["crowd"] = crowd
    if truth is not None and x1_all:
        rep["crowd_log_error"] = {agg.value: log_error(crowd[agg.value], truth) for agg in CROWD_AGGREGATORS}

    fits = {}
    for trial, vals in (("trial1", x1_all), ("trial2", [s.x2 for s in subjects if s.x2 is not None])):
        try:
            p = fit_lognormal_mle(vals)
            fits[trial] = {"mu": p.mu, "sigma": p.sigma, "median": p.median(), "n": len(vals)}
        except ConfidentCrowdError as exc:
            fits[trial] = None
            notes.append(f"lognormal fit {trial}: {type(exc).__name__}")
    rep["lognormal_fit"] = fits

    table = pooled_weights(groups)
    weight_hist = None
    rows: list[dict] = []
    rep["weights"] = {"valid": table.n_valid, "undefined_signal": table.n_undefined,
                      "no_signal": table.no_signal, "missing_trial": table.missing_trial}
    rep["sweep"] = None
    rep["confident_estimates"] = None
    rep["selected_estimate"] = None
    if table.n_valid == 0:
        if table.no_signal and not table.weights:
            notes.append("no social weights: only control groups (no social signal) answered this question")
        else:
            notes.append("no social weights: every subject's first estimate coincides with its signal")
    else:
        weight_hist, _ = weight_histogram(table.weights, bin_width=options.weight_bin_width)
        rep["weights"]["histogram"] = {"bin_width": weight_hist.bin_width,
                                       "bins": [list(b) for b in weight_hist.bins]}
        pairs = table.pairs()
        sweeps = {agg: sweep(pairs, options.grid, agg, min_n=options.min_n) for agg in SWEEP_AGGREGATORS}
        rows = sweep_rows(sweeps)
        rep["sweep"] = rows
        try:
            rep["confident_estimates"] = _confident_block(sweeps, options.min_n, truth)
            chosen = confident_estimate(sweeps[options.aggregator] if options.aggregator in sweeps
                                        else sweep(pairs, options.grid, options.aggregator, options.min_n),
                                        min_n=options.min_n, method=options.method)
            rep["selected_estimate"] = _ce_dict(chosen, truth)
        except NoFeasibleOmega as exc:
            msg = f"question {question_id}: NoFeasibleOmega: {exc}"
            notes.append(msg)
            log.warning("%s", msg)

    panels, zs = standardized_panels(subjects, options, notes)
    rep["fig1"] = {f"{p.label[0]}/{p.label[1]}": _panel_summary(p) for p in panels if p is not None}

    if options.per_group:
        rep["per_group"] = [_group_summary(gid, members, table, options) for gid, members in groups.items()]
    rep["notes"] = notes
    return QuestionResult(question_id, rep, [p for p in panels if p is not None], zs, weight_hist, rows)


def _group_summary(gid: str, members: list[Subject], table: WeightTable, options: AnalysisOptions) -> dict:
    firsts = [m.x1 for m in members if m.x1 is not None]
    d = {"group_id": gid, "condition": members[0].condition.value, "n_subjects": len(members),
         "geometric_mean_trial1": aggregate(firsts, Aggregator.GEOMETRIC_MEAN) if firsts else None,
         "mu_s": table.signals.get(gid)}
    pairs = [(x, w) for x, w, s in zip(table.x1, table.weights, table.subjects) if s.group_id == gid]
    d["valid_weights"] = sum(w.valid for _, w in pairs)
    d["confident_estimate"] = None
    if pairs:
        try:
            res = sweep(pairs, options.grid, options.aggregator, options.min_n)
            d["confident_estimate"] = confident_estimate(res, options.min_n, options.method).value
        except NoFeasibleOmega:
            pass
    return d


def analyze(dataset: Dataset, options: AnalysisOptions, question_ids: Optional[list[str]] = None):
    """Run every question; returns ``(report, per-question results, pooled panels)``."""
    qids = question_ids or dataset.question_ids()
    results = [analyze_question(dataset, q, options) for q in qids]

    notes: list[str] = []
    pooled: dict[tuple[str, str], list[np.ndarray]] = {}
    for r in results:
        for key, z in r.zscores.items():
            pooled.setdefault(key, []).append(z)
    pooled_panels = []
    for key in sorted(pooled, key=lambda k: ([c.value for c in Condition].index(k[0]), k[1])):
        p = _panel(key, np.concatenate(pooled[key]), options.hist_width, options.coverage, notes)
        if p is not None:
            pooled_panels.append(p)

    report = {
        "settings": {
            "omega_grid": list(options.grid.thresholds),
            "min_n": options.min_n,
            "aggregator": options.aggregator.value,
            "method": options.method.value,
            "hist_width": options.hist_width,
            "weight_bin_width": options.weight_bin_width,
            "coverage": options.coverage,
        },
        "dataset": {"rows": len(dataset.rows), "skipped_rows": dataset.skipped, "questions": qids},
        "questions": [r.report for r in results],
        "pooled_fig1": {f"{p.label[0]}/{p.label[1]}": _panel_summary(p) for p in pooled_panels},
        "notes": list(dataset.warnings) + notes,
    }
    return report, results, pooled_panels


# -- rendering ---------------------------------------------------------------

def fmt_number(x) -> str:
    """Fixed 9-significant-digit rendering; magnitudes below 1e-12 print as 0."""
    x = float(x)
    if not math.isfinite(x):
        return "null"
    if abs(x) < 1e-12:
        return "0"
    return format(x, f".{SIG_DIGITS}g")


def _scalar(v) -> str:
    if v is None:
        return "null"
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return fmt_number(v)
    return json.dumps(str(v))


def _render(v, depth: int) -> str:
    pad, inner = "  " * depth, "  " * (depth + 1)
    if isinstance(v, dict):
        if not v:
            return "{}"
        items = [f"{inner}{json.dumps(str(k))}: {_render(val, depth + 1)}" for k, val in v.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(v, (list, tuple)):
        if not v:
            return "[]"
        if all(not isinstance(x, (dict, list, tuple)) for x in v):
            return "[" + ", ".join(_scalar(x) for x in v) + "]"
        return "[\n" + ",\n".join(inner + _render_item(x, depth + 1) for x in v) + "\n" + pad + "]"
    return _scalar(v)


def _render_item(v, depth: int) -> str:
    # table rows (flat dicts) stay on one line
    if isinstance(v, dict) and v and all(not isinstance(x, (dict, list, tuple)) for x in v.values()):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_scalar(x)}" for k, x in v.items()) + "}"
    return _render(v, depth)


def render_report(report: dict) -> str:
    return _render(report, 0) + "\n"


def _cell(v) -> str:
    return "" if v is None else (_scalar(v) if not isinstance(v, str) else v)


def sweep_csv(rows: list[dict]) -> str:
    return _csv_text(SWEEP_HEADER, ([_cell(r[h]) for h in SWEEP_HEADER] for r in rows))


def _safe(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", name)


def _hist_csv(panels: list[HistPanel]) -> str:
    header = ["condition", "trial", "left", "right", "frequency", "band_low", "band_high"]
    rows = []
    for p in panels:
        edges, freqs = p.hist.edges, p.hist.frequencies
        for i, f in enumerate(freqs):
            lo = p.band.low[i] if p.band is not None else None
            hi = p.band.high[i] if p.band is not None else None
            rows.append([p.label[0], p.label[1], _cell(edges[i]), _cell(edges[i + 1]), _cell(f), _cell(lo), _cell(hi)])
    return _csv_text(header, rows)


def _fit_csv(panels: list[HistPanel], samples: int = 101) -> str:
    rows = []
    for p in panels:
        if p.fit is None:
            continue
        edges = p.hist.edges
        for z in np.linspace(edges[0], edges[-1], samples):
            rows.append([p.label[0], p.label[1], _cell(z), _cell(float(p.fit.curve(z, p.hist.bin_width)))])
    return _csv_text(["condition", "trial", "z", "frequency"], rows)


def write_plot_data(out_dir, results: list[QuestionResult], pooled_panels: list[HistPanel]) -> list[Path]:
    """One CSV per plot: standardized histograms with bands, fitted curves,
    weight distribution and sweep curve per question, plus pooled histograms."""
    out_dir = Path(out_dir)
    written = []

    def put(name, text):
        path = out_dir / name
        write_text_atomic(path, text)
        written.append(path)

    for r in results:
        q = _safe(r.question_id)
        if r.panels:
            put(f"fig1_{q}_hist.csv", _hist_csv(r.panels))
            put(f"fig1_{q}_fit.csv", _fit_csv(r.panels))
        if r.weight_hist is not None:
            h = r.weight_hist
            e = h.edges
            put(f"fig2a_{q}_weights.csv", _csv_text(
                ["left", "right", "frequency"],
                ([_cell(e[i]), _cell(e[i + 1]), _cell(f)] for i, f in enumerate(h.frequencies))))
        if r.sweep_rows:
            put(f"fig2b_{q}_sweep.csv", sweep_csv(r.sweep_rows))
    if pooled_panels:
        put("fig1_pooled_hist.csv", _hist_csv(pooled_panels))
        put("fig1_pooled_fit.csv", _fit_csv(pooled_panels))
    return written


def question_sweep(dataset: Dataset, question_id: str, grid: OmegaGrid, min_n: int = 1) -> list[dict]:
    table = pooled_weights(dataset.groups(question_id))
    if table.n_valid == 0:
        raise NoSignalInControl(f"question {question_id!r} has no recoverable social weights")
    pairs = table.pairs()
    return sweep_rows({agg: sweep(pairs, grid, agg, min_n=min_n) for agg in SWEEP_AGGREGATORS})
