"""Command line front end: ``analyze``, ``simulate`` and ``sweep``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import secrets
import sys
from pathlib import Path

from . import analysis
from .dataset import load_dataset, write_dataset, write_questions, write_text_atomic, write_weights
from .errors import ConfidentCrowdError, DatasetError
from .filter import (
    DEFAULT_OMEGA_MAX,
    DEFAULT_OMEGA_MIN,
    DEFAULT_OMEGA_STEPS,
    ExtractionMethod,
    OmegaGrid,
)
from .model import Aggregator
from .sim import SimConfig, WeightMixture, simulate_experiment
from .weights import Condition

log = logging.getLogger("confident_crowd")

SEED_ENV = "CONFIDENT_CROWD_SEED"
EXIT_DATA = 1
EXIT_USAGE = 2


class UsageError(Exception):
    pass


def _add_shared(p: argparse.ArgumentParser, data: bool = True) -> None:
    if data:
        p.add_argument("--data", type=Path, required=True, help="experiment CSV")
        p.add_argument("--questions", type=Path, required=True, help="questions CSV")
        p.add_argument("--skip-invalid", action="store_true",
                       help="drop invalid data rows with a warning instead of aborting")
    p.add_argument("--out-dir", type=Path, default=None)
    p.add_argument("--omega-max", type=float, default=DEFAULT_OMEGA_MAX)
    p.add_argument("--omega-min", type=float, default=DEFAULT_OMEGA_MIN)
    p.add_argument("--omega-steps", type=int, default=DEFAULT_OMEGA_STEPS)
    p.add_argument("--omegas", default=None,
                   help="explicit comma-separated grid, strictly decreasing (overrides --omega-*)")
    p.add_argument("--min-n", type=int, default=None)
    p.add_argument("--aggregator", choices=["geomean", "median"], default="geomean")
    p.add_argument("--method", choices=["smallest", "trend"], default="smallest")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--per-group", action="store_true", help="add per-group breakdown to the report")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="confident-crowd",
                                     description="Social-weight filtering of crowd estimates.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="full report for every question")
    _add_shared(a)
    a.add_argument("--question", default=None, help="analyze only this question_id")

    s = sub.add_parser("sweep", help="sweep curve CSV for one question")
    _add_shared(s)
    s.add_argument("--question", default=None, help="question_id (optional if the data has one question)")
    s.add_argument("--out", type=Path, default=None, help="output CSV (default: stdout or OUT_DIR/sweep_<q>.csv)")

    m = sub.add_parser("simulate", help="write a synthetic dataset")
    _add_shared(m, data=False)
    m.add_argument("--config", type=Path, default=None, help="JSON file of SimConfig fields; flags override")
    m.add_argument("--truth", type=float, default=None)
    m.add_argument("--sigma-p", type=float, default=None)
    bias = m.add_mutually_exclusive_group()
    bias.add_argument("--bias-slope", type=float, default=None, help="log-bias per unit clamped weight")
    bias.add_argument("--crowd-bias", type=float, default=None,
                      help="target expected full-crowd log bias; sets the slope from the mixture")
    m.add_argument("--p-zero", type=float, default=None)
    m.add_argument("--p-one", type=float, default=None)
    m.add_argument("--p-out", type=float, default=None)
    m.add_argument("--interior-shape", type=float, default=None)
    m.add_argument("--groups", type=int, default=None)
    m.add_argument("--group-size", type=int, default=None)
    m.add_argument("--condition", choices=[c.value for c in Condition], default=None)
    m.add_argument("--question-id", default=None)
    m.add_argument("--question-text", default=None)
    return parser


def _grid(args) -> OmegaGrid:
    try:
        if args.omegas:
            return OmegaGrid(tuple(float(x) for x in args.omegas.split(",") if x.strip()))
        return OmegaGrid.geometric(args.omega_max, args.omega_min, args.omega_steps)
    except ValueError as exc:
        raise UsageError(f"--omegas/--omega-*: {exc}") from exc


def _options(args, default_min_n: int) -> analysis.AnalysisOptions:
    min_n = default_min_n if args.min_n is None else args.min_n
    if min_n < 1:
        raise UsageError("--min-n must be >= 1")
    return analysis.AnalysisOptions(
        grid=_grid(args), min_n=min_n,
        aggregator=Aggregator.parse(args.aggregator),
        method=ExtractionMethod.parse(args.method),
        per_group=args.per_group,
    )


def _load(args):
    ds = load_dataset(args.data, args.questions, skip_invalid=args.skip_invalid)
    if ds.skipped:
        log.warning("skipped %d invalid rows", ds.skipped)
    return ds


def run_analyze(args) -> int:
    options = _options(args, default_min_n=5)
    ds = _load(args)
    qids = None
    if args.question is not None:
        if args.question not in ds.questions:
            raise UsageError(f"--question: unknown question_id {args.question!r}")
        qids = [args.question]
    report, results, pooled = analysis.analyze(ds, options, qids)
    text = analysis.render_report(report)
    if args.out_dir is None:
        sys.stdout.write(text)
    else:
        write_text_atomic(args.out_dir / "report.json", text)
        written = analysis.write_plot_data(args.out_dir, results, pooled)
        log.info("wrote report.json and %d plot-data files to %s", len(written), args.out_dir)
    return 0


def run_sweep(args) -> int:
    options = _options(args, default_min_n=1)
    ds = _load(args)
    qid = args.question
    if qid is None:
        present = ds.question_ids()
        if len(present) != 1:
            raise UsageError("--question is required when the data has several questions")
        qid = present[0]
    if qid not in ds.questions:
        raise UsageError(f"--question: unknown question_id {qid!r}")
    rows = analysis.question_sweep(ds, qid, options.grid, options.min_n)
    text = analysis.sweep_csv(rows)
    out = args.out
    if out is None and args.out_dir is not None:
        out = args.out_dir / f"sweep_{analysis._safe(qid)}.csv"
    if out is None:
        sys.stdout.write(text)
    else:
        write_text_atomic(out, text)
    return 0


def resolve_seed(flag) -> int:
    """Flag first, then the environment variable, then fresh entropy."""
    if flag is not None:
        return flag
    env = os.environ.get(SEED_ENV)
    if env not in (None, ""):
        try:
            return int(env)
        except ValueError as exc:
            raise UsageError(f"{SEED_ENV}: not an integer: {env!r}") from exc
    return secrets.randbits(63)


_FLAG_FOR = {
    "truth": "--truth", "sigma_p": "--sigma-p", "bias_slope": "--bias-slope", "n_groups": "--groups",
    "group_size": "--group-size", "seed": "--seed", "p_zero": "--p-zero", "p_one": "--p-one",
    "p_out": "--p-out", "interior_shape": "--interior-shape", "condition": "--condition", "crowd_bias": "--crowd-bias",
}


def sim_config(args) -> SimConfig:
    cfg = {}
    if args.config is not None:
        try:
            cfg = json.loads(args.config.read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise UsageError(f"--config: {exc}") from exc
    overrides = {
        "truth": args.truth, "sigma_p": args.sigma_p, "bias_slope": args.bias_slope,
        "crowd_bias": args.crowd_bias, "p_zero": args.p_zero, "p_one": args.p_one, "p_out": args.p_out,
        "interior_shape": args.interior_shape, "n_groups": args.groups, "group_size": args.group_size,
        "condition": args.condition, "question_id": args.question_id, "question_text": args.question_text,
    }
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    if args.crowd_bias is not None:
        cfg.pop("bias_slope", None)
    if args.bias_slope is not None:
        cfg.pop("crowd_bias", None)
    cfg["seed"] = resolve_seed(args.seed if args.seed is not None else cfg.get("seed"))

    for required in ("truth", "sigma_p"):
        if required not in cfg:
            raise UsageError(f"{_FLAG_FOR[required]} is required (flag or --config)")
    mixture_keys = ("p_zero", "p_one", "p_out", "interior_shape", "out_width")
    mix = {k: cfg.pop(k) for k in mixture_keys if k in cfg}
    crowd_bias = cfg.pop("crowd_bias", None)
    try:
        mixture = WeightMixture(**mix)
        if crowd_bias is not None:
            return SimConfig.with_crowd_bias(crowd_bias, mixture=mixture, **cfg)
        return SimConfig(mixture=mixture, **cfg)
    except TypeError as exc:
        raise UsageError(f"--config: {exc}") from exc
    except ValueError as exc:
        name = str(exc).split(" ", 1)[0]
        raise UsageError(f"{_FLAG_FOR.get(name, name)}: {exc}") from exc


def run_simulate(args) -> int:
    config = sim_config(args)
    out_dir = args.out_dir or Path(".")
    data = simulate_experiment(config)
    write_dataset(out_dir / "data.csv", data.rows())
    write_questions(out_dir / "questions.csv", [data.question()])
    write_weights(out_dir / "weights.csv", data.weight_rows())
    echo = config.as_dict()
    echo["expected_crowd_log_bias"] = config.bias_slope * config.mixture.expected_clamped()
    sys.stdout.write(json.dumps(echo, indent=2) + "\n")
    return 0


COMMANDS = {"analyze": run_analyze, "simulate": run_simulate, "sweep": run_sweep}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.error(str(exc))
    except DatasetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ConfidentCrowdError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
