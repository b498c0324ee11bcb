"""Answer normalization, metrics, error labels and benchmark reports."""

from __future__ import annotations

import ast
import csv
import json
import logging
import math
import re
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from difflib import get_close_matches
from pathlib import Path
from typing import Iterable, Optional, Sequence

logger = logging.getLogger(__name__)

METRICS = ("ex", "da", "hit@1", "f1")
DEFAULT_METRICS = {"db": ("ex", "f1"), "table": ("da", "f1"), "kg": ("hit@1", "f1")}
ERROR_LABELS = (
    "execution_failure",
    "box_error",
    "field_error",
    "reasoning_logic_error",
    "output_format_error",
    "unknown",
)
REL_TOL = 1e-6
REPORT_NOTES = [
    "hit@1 is 1 when the predicted and gold answer sets intersect (the system returns sets, not rankings)",
    "query intent errors cannot be told apart automatically and are counted as reasoning_logic_error",
]

_NUMBER = re.compile(r"[+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?")
_GROUPED = re.compile(r"[+-]?\d{1,3}(?:,\d{3})+(?:\.\d+)?")
_INTEGER = re.compile(r"[+-]?\d+")
_QUOTES = "'\"`"
_MAX_PASSES = 16


def _canonical_number(text: str) -> str:
    if _INTEGER.fullmatch(text):
        return str(int(text))
    x = float(text)
    if x.is_integer() and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def _normalize_once(text: str) -> list[str]:
    text = text.strip()
    while True:
        before = text
        if len(text) >= 2 and text[0] == text[-1] and text[0] in _QUOTES:
            text = text[1:-1].strip()
        if len(text) >= 2 and (text[0], text[-1]) in (("[", "]"), ("(", ")")):
            try:
                parsed = ast.literal_eval(text)
            except (ValueError, SyntaxError, MemoryError, RecursionError, TypeError):
                parsed = None
            if isinstance(parsed, (list, tuple)):
                return [str(item) for item in parsed]
        if text == before:
            break
    text = re.sub(r"[\s_]+", " ", text.lower()).strip()
    if _GROUPED.fullmatch(text):
        text = text.replace(",", "")
    if _NUMBER.fullmatch(text):
        text = _canonical_number(text)
    return [text]


def normalize_value(value) -> list[str]:
    """Canonical forms of one answer element.

    Usually a single string; an element holding a stringified list (such as
    ``"['x']"``) expands to its items. The rules are applied until nothing
    changes, so normalizing a normalized value is a no-op.
    """
    pending, done = [str(value)], []
    for _ in range(_MAX_PASSES):
        if not pending:
            break
        nxt = []
        for text in pending:
            out = _normalize_once(text)
            if out == [text]:
                done.append(text)
            else:
                nxt.extend(out)
        pending = nxt
    return done + pending


def normalize(rows: Iterable[Sequence]) -> Counter:
    """Flatten answer rows into a multiset of canonical element strings."""
    return Counter(v for row in rows for item in row for v in normalize_value(item))


def _as_float(s: str) -> Optional[float]:
    if _NUMBER.fullmatch(s):
        return float(s)
    return None


def _equal(a: str, b: str) -> bool:
    if a == b:
        return True
    if _INTEGER.fullmatch(a) and _INTEGER.fullmatch(b):
        return False
    fa, fb = _as_float(a), _as_float(b)
    return fa is not None and fb is not None and math.isclose(fa, fb, rel_tol=REL_TOL)


def _elements(rows, multiset: bool = False) -> list[str]:
    values = sorted(normalize(rows).elements())
    if multiset:
        return values
    out: list[str] = []
    for v in values:
        if not any(_equal(v, w) for w in out):
            out.append(v)
    return out


def _matches(pred: list[str], gold: list[str]) -> int:
    used = [False] * len(gold)
    n = 0
    for p in pred:
        for j, g in enumerate(gold):
            if not used[j] and _equal(p, g):
                used[j] = True
                n += 1
                break
    return n


def exact_set_match(pred, gold, multiset: bool = False) -> int:
    p, g = _elements(pred, multiset), _elements(gold, multiset)
    return int(len(p) == len(g) and _matches(p, g) == len(p))


def hit_at_1(pred, gold) -> int:
    return int(_matches(_elements(pred), _elements(gold)) > 0)


def f1(pred, gold) -> float:
    p, g = _elements(pred), _elements(gold)
    if not p and not g:
        return 1.0
    if not p or not g:
        return 0.0
    common = _matches(p, g)
    if common == 0:
        return 0.0
    precision, recall = common / len(p), common / len(g)
    return 2 * precision * recall / (precision + recall)


def score(metric: str, pred, gold, multiset: bool = False) -> float:
    if metric in ("ex", "da"):
        return float(exact_set_match(pred, gold, multiset))
    if metric == "hit@1":
        return float(hit_at_1(pred, gold))
    if metric == "f1":
        return f1(pred, gold)
    raise ValueError(f"unknown metric {metric!r}")


# -- error taxonomy -----------------------------------------------------------

_NAME_ERROR = re.compile(r"NameError: name '([^']+)' is not defined")
_KEY_ERROR = re.compile(r"KeyError: (.+)$|not in index|Column\(s\) .* do not exist|has no attribute '([^']+)'", re.M)


def _raw_set(rows) -> set[str]:
    return {str(v).strip() for row in rows for v in row}


def classify_error(result, box_set, gold) -> Optional[str]:
    """Heuristic failure label for one agent result; None when fully correct."""
    if not result.attempts:
        return "unknown"
    last = result.attempts[-1]
    if result.succeeded:
        if exact_set_match(result.answer, gold):
            return None if _raw_set(result.answer) == _raw_set(gold) else "output_format_error"
        return "reasoning_logic_error"
    outcome = last.outcome
    if outcome.status == "empty":
        return "reasoning_logic_error"
    trace = outcome.error_text or ""
    boxes = [b.name for b in box_set.boxes] if box_set is not None else []
    m = _NAME_ERROR.search(trace)
    if m:
        name = m.group(1)
        code = last.output.code if last.output is not None else ""
        used_as_frame = re.search(rf"\b{re.escape(name)}\s*\[", code) is not None
        if get_close_matches(name, boxes, n=1, cutoff=0.6) or used_as_frame:
            return "box_error"
    if "KeyError" in trace or ("DataFrame" in trace and _KEY_ERROR.search(trace)):
        return "field_error"
    return "execution_failure"


# -- reports ------------------------------------------------------------------


@dataclass
class EvalReport:
    records: list[dict] = field(default_factory=list)
    aggregates: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    notes: list[str] = field(default_factory=lambda: list(REPORT_NOTES))

    def to_json(self) -> dict:
        return {
            "n_examples": len(self.records),
            "aggregates": self.aggregates,
            "records": self.records,
            "config": self.config,
            "notes": self.notes,
        }

    def write(self, out_dir: str | Path) -> tuple[Path, Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        json_path, csv_path = out_dir / "report.json", out_dir / "report.csv"
        json_path.write_text(json.dumps(self.to_json(), ensure_ascii=False, indent=1), encoding="utf-8")
        columns = ["id", "task", *METRICS, "error_label", "attempts", "succeeded"]
        with csv_path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore")
            w.writeheader()
            for r in self.records:
                w.writerow({k: ("" if r.get(k) is None else r.get(k)) for k in columns})
        return json_path, csv_path


def aggregate(records: Sequence[dict]) -> dict:
    out = {}
    for m in METRICS:
        values = [r[m] for r in records if r.get(m) is not None]
        out[m] = sum(values) / len(values) if values else None
    return out


def evaluate_result(example, result, box_set=None, metrics: Optional[Sequence[str]] = None,
                    multiset: bool = False) -> dict:
    metrics = metrics or DEFAULT_METRICS[example.task]
    record = {"id": example.id, "task": example.task, **{m: None for m in METRICS}}
    for m in metrics:
        record[m] = score(m, result.answer, example.gold, multiset)
    record["error_label"] = classify_error(result, box_set, example.gold)
    record["attempts"] = len(result.attempts)
    record["succeeded"] = result.succeeded
    record["predicted"] = result.answer
    return record


def run_benchmark(examples, agent, *, metrics: Optional[dict] = None, workers: int = 1,
                  out_dir: str | Path | None = None, multiset: bool = False) -> EvalReport:
    """Answer every example with ``agent`` and score it.

    Per-example model-content failures are recorded as wrong answers;
    environment failures (sandbox spawn, transport) abort the run after the
    partial report is written.
    """
    metrics = {**DEFAULT_METRICS, **(metrics or {})}
    report = EvalReport(config={"agent": agent.config_snapshot(), "workers": workers, "multiset": multiset})
    records: list[Optional[dict]] = [None] * len(examples)

    def one(i: int):
        from .agent import FATAL_ERRORS, AgentResult
        from .errors import PandoraError

        ex = examples[i]
        try:
            box_set = agent.to_boxset(ex.knowledge, ex.question)
            result = agent.answer(ex.question, box_set, task_tag=ex.task, run_id=ex.id)
        except FATAL_ERRORS:
            raise
        except PandoraError as exc:
            logger.warning("example %s failed before generation: %s", ex.id, exc)
            box_set, result = None, AgentResult(ex.question, [], [], False, ex.task)
        records[i] = evaluate_result(ex, result, box_set, metrics[ex.task], multiset)

    try:
        if workers <= 1:
            for i in range(len(examples)):
                one(i)
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                futures = [pool.submit(one, i) for i in range(len(examples))]
                try:
                    for f in futures:
                        f.result()
                except BaseException:
                    for f in futures:
                        f.cancel()
                    raise
    finally:
        report.records = [r for r in records if r is not None]
        report.aggregates = aggregate(report.records)
        if out_dir is not None:
            report.write(out_dir)
    return report
