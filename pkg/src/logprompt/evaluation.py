"""Confusion counts, precision/recall/F1 and report files.

The anomalous class is the positive class.  A metric whose denominator is
zero is undefined: it is ``None`` in Python and ``NA`` in report files.
"""
from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .ingest import ANOMALOUS, LABELS

REPORT_COLUMNS = ("precision", "recall", "f1", "tp", "fp", "fn", "tn", "undecided", "runtime_seconds")
NA = "NA"


class EvalError(ValueError):
    pass


@dataclass
class Confusion:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass
class MetricsReport:
    confusion: Confusion
    precision: Optional[float]
    recall: Optional[float]
    f1: Optional[float]
    undecided_count: int = 0
    runtime_seconds: float = 0.0
    extra: dict = field(default_factory=dict)

    def row(self, digits: Optional[int] = 3) -> dict:
        """Flat mapping in report column order; ``digits=None`` keeps full precision."""
        def fmt(v):
            if v is None:
                return NA
            return round(v, digits) if digits is not None else v

        c = self.confusion
        return {
            "precision": fmt(self.precision), "recall": fmt(self.recall), "f1": fmt(self.f1),
            "tp": c.tp, "fp": c.fp, "fn": c.fn, "tn": c.tn,
            "undecided": self.undecided_count,
            "runtime_seconds": round(self.runtime_seconds, 3) if digits is not None else self.runtime_seconds,
        }


def confusion(predictions, labels) -> Confusion:
    predictions, labels = list(predictions), list(labels)
    if len(predictions) != len(labels):
        raise EvalError(f"{len(predictions)} predictions for {len(labels)} labels")
    if not labels:
        raise EvalError("nothing to score")
    c = Confusion()
    for p, y in zip(predictions, labels):
        if p not in LABELS or y not in LABELS:
            raise EvalError(f"unexpected label pair ({p!r}, {y!r})")
        if y == ANOMALOUS:
            if p == ANOMALOUS:
                c.tp += 1
            else:
                c.fn += 1
        elif p == ANOMALOUS:
            c.fp += 1
        else:
            c.tn += 1
    return c


def f1_score(precision: Optional[float], recall: Optional[float]) -> Optional[float]:
    if precision is None or recall is None or precision + recall == 0:
        return None
    return 2 * precision * recall / (precision + recall)


def metrics(c: Confusion, undecided: int = 0, runtime_seconds: float = 0.0) -> MetricsReport:
    precision = c.tp / (c.tp + c.fp) if (c.tp + c.fp) else None
    recall = c.tp / (c.tp + c.fn) if (c.tp + c.fn) else None
    return MetricsReport(c, precision, recall, f1_score(precision, recall), undecided, runtime_seconds)


def evaluate(model, test, batch_size: int = 64):
    """Classify every test sequence and score the verdicts.

    Returns ``(MetricsReport, verdicts)``; undecided answers count as normal.
    """
    test = list(test)
    if not test:
        raise EvalError("empty test set")
    start = time.perf_counter()
    verdicts = model.predict([s.messages for s in test], batch_size=batch_size)
    elapsed = time.perf_counter() - start
    c = confusion([v.predicted for v in verdicts], [s.label for s in test])
    undecided = sum(1 for v in verdicts if v.label not in LABELS)
    return metrics(c, undecided, elapsed), verdicts


def write_report(report: MetricsReport, out_dir, stem: str = "metrics") -> tuple:
    """Write ``<stem>.csv`` (3-decimal) and ``<stem>.jsonl`` (full precision)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{stem}.csv"
    with open(csv_path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS)
        w.writeheader()
        w.writerow(report.row(3))
    jsonl_path = out_dir / f"{stem}.jsonl"
    with open(jsonl_path, "w") as fh:
        rec = report.row(None)
        rec = {k: (None if v == NA else v) for k, v in rec.items()}
        rec.update(report.extra)
        fh.write(json.dumps(rec) + "\n")
    return csv_path, jsonl_path


def write_table(rows: list, columns, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(columns), extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow(r)
