"""CSV schemas for experiment data, question truths and weight sidecars.

Loading is strict by default: every violation is logged with file, line and
rule, and the first one is raised. ``skip_invalid=True`` drops offending data
rows instead and counts them.
"""
from __future__ import annotations

import csv
import io
import logging
import os
import re
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

from .errors import DatasetError
from .weights import Condition

log = logging.getLogger(__name__)

DATA_HEADER = ["group_id", "subject_id", "question_id", "condition", "trial", "estimate"]
QUESTIONS_HEADER = ["question_id", "text", "truth"]
WEIGHTS_HEADER = ["group_id", "subject_id", "w_true"]
SWEEP_HEADER = ["omega", "n_selected", "estimate_geomean", "estimate_median"]

_DECIMAL = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")
_INTEGER = re.compile(r"^[+-]?\d+$")


@dataclass(frozen=True)
class DatasetRow:
    group_id: str
    subject_id: str
    question_id: str
    condition: Condition
    trial: int
    estimate: float

    @property
    def key(self) -> tuple[str, str, str, int]:
        return (self.group_id, self.subject_id, self.question_id, self.trial)


@dataclass(frozen=True)
class QuestionRow:
    question_id: str
    text: str
    truth: Optional[float]


@dataclass(frozen=True)
class Subject:
    """One subject's answers to one question (trials 1 and 2 only)."""

    group_id: str
    subject_id: str
    condition: Condition
    x1: Optional[float]
    x2: Optional[float]


@dataclass
class Dataset:
    rows: list[DatasetRow]
    questions: dict[str, QuestionRow]
    skipped: int = 0
    warnings: list[str] = field(default_factory=list)

    def question_ids(self) -> list[str]:
        """Questions that have data, in questions-file order."""
        present = {r.question_id for r in self.rows}
        return [q for q in self.questions if q in present]

    def subjects(self, question_id: str) -> list[Subject]:
        """Subjects answering ``question_id`` in first-appearance order."""
        order: dict[tuple[str, str], dict] = {}
        for r in self.rows:
            if r.question_id != question_id:
                continue
            rec = order.setdefault((r.group_id, r.subject_id), {"condition": r.condition})
            if r.trial in (1, 2):
                rec[r.trial] = r.estimate
        return [Subject(g, s, rec["condition"], rec.get(1), rec.get(2)) for (g, s), rec in order.items()]

    def groups(self, question_id: str) -> dict[str, list[Subject]]:
        out: dict[str, list[Subject]] = {}
        for s in self.subjects(question_id):
            out.setdefault(s.group_id, []).append(s)
        return out


def _parse_decimal(text: str) -> Optional[float]:
    text = text.strip()
    if not _DECIMAL.match(text):
        return None
    return float(text)


def _read_rows(path: Path, header: list[str]):
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DatasetError(path, None, "FileNotReadable", str(exc)) from exc
    with fh:
        reader = csv.reader(fh)
        got = next(reader, None)
        if got is None or [h.strip() for h in got] != header:
            raise DatasetError(path, 1, "BadHeader", f"expected header {','.join(header)!r}, got {got!r}")
        for row in reader:
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            yield reader.line_num, row


def load_questions(path) -> dict[str, QuestionRow]:
    path = Path(path)
    questions: dict[str, QuestionRow] = {}
    for line, row in _read_rows(path, QUESTIONS_HEADER):
        if len(row) != 3:
            raise DatasetError(path, line, "FieldCount", f"expected 3 fields, got {len(row)}")
        qid, text, truth_s = (c.strip() for c in row)
        if not qid:
            raise DatasetError(path, line, "MissingField", "empty question_id")
        if qid in questions:
            raise DatasetError(path, line, "DuplicateKey", f"question {qid!r} repeated")
        truth = None
        if truth_s:
            truth = _parse_decimal(truth_s)
            if truth is None:
                raise DatasetError(path, line, "InvalidNumber", f"truth {truth_s!r} is not a decimal")
            if not truth > 0 or truth == float("inf"):
                raise DatasetError(path, line, "NonPositiveEstimate", f"truth must be > 0, got {truth_s!r}")
        questions[qid] = QuestionRow(qid, text, truth)
    return questions


def load_dataset(data_path, questions_path, skip_invalid: bool = False) -> Dataset:
    data_path = Path(data_path)
    questions = load_questions(questions_path)

    rows: list[DatasetRow] = []
    seen: set[tuple] = set()
    group_condition: dict[tuple[str, str], Condition] = {}
    violations: list[DatasetError] = []

    for line, raw in _read_rows(data_path, DATA_HEADER):
        def bad(rule, msg):
            violations.append(DatasetError(data_path, line, rule, msg))

        if len(raw) != len(DATA_HEADER):
            bad("FieldCount", f"expected {len(DATA_HEADER)} fields, got {len(raw)}")
            continue
        group_id, subject_id, qid, cond_s, trial_s, est_s = (c.strip() for c in raw)
        if not (group_id and subject_id and qid):
            bad("MissingField", "group_id, subject_id and question_id must be non-empty")
            continue
        try:
            condition = Condition.parse(cond_s)
        except ValueError:
            bad("UnknownCondition", f"condition {cond_s!r} not in control/mean/full")
            continue
        if not _INTEGER.match(trial_s):
            bad("InvalidTrial", f"trial {trial_s!r} is not an integer")
            continue
        trial = int(trial_s)
        if trial < 1:
            bad("InvalidTrial", f"trial must be >= 1, got {trial}")
            continue
        estimate = _parse_decimal(est_s)
        if estimate is None:
            bad("InvalidNumber", f"estimate {est_s!r} is not a decimal")
            continue
        if not estimate > 0 or estimate == float("inf"):
            bad("NonPositiveEstimate", f"estimate must be > 0, got {est_s!r}")
            continue
        if qid not in questions:
            bad("UnknownQuestion", f"question {qid!r} missing from questions file")
            continue
        row = DatasetRow(group_id, subject_id, qid, condition, trial, estimate)
        if row.key in seen:
            bad("DuplicateKey", f"duplicate (group, subject, question, trial) {row.key!r}")
            continue
        prior = group_condition.setdefault((group_id, qid), condition)
        if prior is not condition:
            bad("InconsistentCondition", f"group {group_id!r} already has condition {prior.value!r}")
            continue
        seen.add(row.key)
        rows.append(row)

    for v in violations:
        log.warning("%s", v)
    if violations and not skip_invalid:
        err = violations[0]
        err.violations = violations
        raise err
    ds = Dataset(rows=rows, questions=questions, skipped=len(violations))
    if violations:
        ds.warnings.append(f"skipped {len(violations)} invalid data rows")
    return ds


def _fmt(x: float) -> str:
    return repr(float(x))


def _csv_text(header: list[str], rows: Iterable[Iterable]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def write_text_atomic(path, text: str) -> None:
    """Write the whole file via a temp file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dataset_csv(rows: Iterable[DatasetRow]) -> str:
    return _csv_text(DATA_HEADER, (
        (r.group_id, r.subject_id, r.question_id, r.condition.value, r.trial, _fmt(r.estimate)) for r in rows
    ))


def questions_csv(questions: Iterable[QuestionRow]) -> str:
    return _csv_text(QUESTIONS_HEADER, (
        (q.question_id, q.text, "" if q.truth is None else _fmt(q.truth)) for q in questions
    ))


def weights_csv(rows: Iterable[tuple[str, str, float]]) -> str:
    return _csv_text(WEIGHTS_HEADER, ((g, s, _fmt(w)) for g, s, w in rows))


def write_dataset(path, rows: Iterable[DatasetRow]) -> None:
    write_text_atomic(path, dataset_csv(rows))


def write_questions(path, questions: Iterable[QuestionRow]) -> None:
    write_text_atomic(path, questions_csv(questions))


def write_weights(path, rows: Iterable[tuple[str, str, float]]) -> None:
    write_text_atomic(path, weights_csv(rows))


def load_weights(path) -> dict[tuple[str, str], float]:
    path = Path(path)
    out = {}
    for line, row in _read_rows(path, WEIGHTS_HEADER):
        w = _parse_decimal(row[2]) if len(row) == 3 else None
        if w is None:
            raise DatasetError(path, line, "InvalidNumber", f"bad weight row {row!r}")
        out[(row[0].strip(), row[1].strip())] = w
    return out
