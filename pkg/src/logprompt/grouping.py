"""Group log records into labelled sequences (session or count-based window)."""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .ingest import ANOMALOUS, NORMAL, LogRecord

TAIL_POLICIES = ("drop", "emit_short")


class GroupingError(ValueError):
    pass


@dataclass
class LogSequence:
    id: str
    messages: list
    label: str
    order_key: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), ensure_ascii=False)

    @classmethod
    def from_dict(cls, d: dict) -> "LogSequence":
        return cls(id=d["id"], messages=list(d["messages"]), label=d["label"], order_key=int(d["order_key"]))

    @property
    def anomalous(self) -> bool:
        return self.label == ANOMALOUS


@dataclass(frozen=True)
class WindowSpec:
    window_size: int = 100
    step: int = 100
    tail_policy: str = "drop"

    def __post_init__(self):
        if int(self.window_size) <= 0 or int(self.step) <= 0:
            raise GroupingError(f"window_size and step must be positive (got {self.window_size}, {self.step})")
        if self.tail_policy not in TAIL_POLICIES:
            raise GroupingError(f"tail_policy must be one of {TAIL_POLICIES}, got {self.tail_policy!r}")


def window_starts(n: int, spec: WindowSpec) -> range:
    """Start offsets of every window over ``n`` records."""
    if spec.tail_policy == "drop":
        if n < spec.window_size:
            return range(0)
        return range(0, n - spec.window_size + 1, spec.step)
    return range(0, n, spec.step)


def label_window(members: Iterable[LogRecord]) -> str:
    label = NORMAL
    for rec in members:
        if rec.message_label is None:
            raise GroupingError(f"record {rec.index} has no message label; window labelling needs one")
        if rec.message_label == ANOMALOUS:
            label = ANOMALOUS
    return label


def group_by_window(records: Iterable[LogRecord], spec: WindowSpec) -> list:
    records = records if isinstance(records, Sequence) else list(records)
    out = []
    for start in window_starts(len(records), spec):
        members = records[start:start + spec.window_size]
        out.append(LogSequence(
            id=f"w{members[0].index}",
            messages=[r.content for r in members],
            label=label_window(members),
            order_key=members[0].index,
        ))
    return out


def group_by_session(records: Iterable[LogRecord], session_label_table: Mapping[str, str]) -> list:
    sessions: dict = {}
    for rec in records:
        key = rec.session_key
        if key is None:
            raise GroupingError(f"record {rec.index} has no session key")
        seq = sessions.get(key)
        if seq is None:
            if key not in session_label_table:
                raise GroupingError(f"session {key!r} missing from label table")
            seq = sessions[key] = LogSequence(key, [], session_label_table[key], rec.index)
        seq.messages.append(rec.content)
    return list(sessions.values())


_LABEL_ALIASES = {
    "anomaly": ANOMALOUS, "anomalous": ANOMALOUS, "abnormal": ANOMALOUS, "1": ANOMALOUS,
    "normal": NORMAL, "0": NORMAL,
}


def load_label_table(path) -> dict:
    """Read a two-column CSV (session key, label), e.g. the HDFS ``anomaly_label.csv``."""
    path = Path(path)
    if not path.is_file():
        raise GroupingError(f"label table not found: {path}")
    table = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.reader(fh):
            if len(row) < 2:
                continue
            key, raw = row[0].strip(), row[1].strip().lower()
            if raw not in _LABEL_ALIASES:
                if not table and raw == "label":
                    continue  # header row
                raise GroupingError(f"{path}: unknown label {row[1]!r} for {key!r}")
            table[key] = _LABEL_ALIASES[raw]
    return table


def write_sequences(seqs, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in seqs:
            fh.write(s.to_json() + "\n")


def read_sequences(path) -> list:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        return [LogSequence.from_dict(json.loads(line)) for line in fh if line.strip()]

