"""Raw log ingestion.

Each dataset is described by an :class:`AdapterSpec` (an INI file) that says how
to split a line into header and content, how to read a per-message label off the
header, and how to pull a session key out of the content.  Lines that do not
match the header pattern are never dropped silently: they come back as
:class:`ParseReject` objects and are counted in the :class:`IngestReport`.
"""
from __future__ import annotations

import configparser
import json
import re
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterator, Optional, Union

NORMAL = "normal"
ANOMALOUS = "anomalous"
LABELS = (NORMAL, ANOMALOUS)

BUILTIN_ADAPTERS = ("bgl", "hdfs", "thunderbird", "liberty")

_LABEL_RULE = re.compile(
    r"^\s*(?P<group>\w+)\s*(?P<op>==|!=)\s*(?P<value>\S+)\s*=>\s*(?P<label>normal|anomalous)\s*$"
)


class IngestError(Exception):
    """Fatal ingestion problem (unreadable file, bad adapter config)."""


@dataclass
class LogRecord:
    index: int
    content: str
    line_no: int
    timestamp: Optional[float] = None
    session_key: Optional[str] = None
    message_label: Optional[str] = None


@dataclass
class ParseReject:
    line_no: int
    raw: str
    reason: str


@dataclass
class IngestReport:
    total: int = 0
    parsed: int = 0
    rejected: int = 0

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


@dataclass
class LabelRule:
    """``<group> == <value> => <label>``; a non-matching value gets the other label."""

    group: str
    op: str
    value: str
    label: str

    @classmethod
    def parse(cls, text: str) -> Optional["LabelRule"]:
        if text is None or not text.strip() or text.strip().lower() == "none":
            return None
        m = _LABEL_RULE.match(text)
        if m is None:
            raise IngestError(f"cannot parse label_rule {text!r}")
        return cls(**m.groupdict())

    def apply(self, groups: dict) -> Optional[str]:
        token = groups.get(self.group)
        if token is None:
            return None
        hit = (token == self.value) if self.op == "==" else (token != self.value)
        other = ANOMALOUS if self.label == NORMAL else NORMAL
        return self.label if hit else other


@dataclass
class AdapterSpec:
    name: str
    header_pattern: str
    label_rule: Optional[str] = None
    session_key_rule: Optional[str] = None
    _header: re.Pattern = field(init=False, repr=False)
    _label: Optional[LabelRule] = field(init=False, repr=False)
    _session: Optional[re.Pattern] = field(init=False, repr=False)

    def __post_init__(self):
        try:
            self._header = re.compile(self.header_pattern)
        except re.error as exc:
            raise IngestError(f"adapter {self.name}: bad header_pattern: {exc}") from exc
        if "content" not in self._header.groupindex:
            raise IngestError(f"adapter {self.name}: header_pattern needs a (?P<content>...) group")
        self._label = LabelRule.parse(self.label_rule)
        if self._label is not None and self._label.group not in self._header.groupindex:
            raise IngestError(
                f"adapter {self.name}: label_rule refers to unknown group {self._label.group!r}"
            )
        self._session = None
        if self.session_key_rule:
            try:
                self._session = re.compile(self.session_key_rule)
            except re.error as exc:
                raise IngestError(f"adapter {self.name}: bad session_key_rule: {exc}") from exc

    @property
    def labels_messages(self) -> bool:
        return self._label is not None

    @property
    def has_sessions(self) -> bool:
        return self._session is not None

    def session_key(self, content: str) -> Optional[str]:
        if self._session is None:
            return None
        m = self._session.search(content)
        if m is None:
            return None
        if "session" in self._session.groupindex:
            return m.group("session")
        return m.group(0)

    def self_test(self, lines) -> float:
        """Fraction of ``lines`` matched by the header pattern."""
        lines = list(lines)
        if not lines:
            return 1.0
        ok = sum(1 for i, line in enumerate(lines) if isinstance(parse_log_line(line, self, i), LogRecord))
        return ok / len(lines)


def load_adapter(ref: Union[str, Path]) -> AdapterSpec:
    """Load an adapter by builtin name (``bgl``, ``hdfs``, ...) or INI file path."""
    ref = str(ref)
    if ref in BUILTIN_ADAPTERS:
        text = resources.files("logprompt.adapters").joinpath(f"{ref}.ini").read_text()
        source = f"<builtin {ref}>"
    else:
        path = Path(ref)
        if not path.is_file():
            raise IngestError(f"adapter config not found: {path}")
        text = path.read_text()
        source = str(path)
    parser = configparser.ConfigParser(interpolation=None)
    parser.read_string(text, source=source)
    if "adapter" not in parser:
        raise IngestError(f"{source}: missing [adapter] section")
    sec = parser["adapter"]
    for key in ("name", "header_pattern"):
        if key not in sec:
            raise IngestError(f"{source}: missing key {key!r}")
    return AdapterSpec(
        name=sec["name"],
        header_pattern=sec["header_pattern"],
        label_rule=sec.get("label_rule") or None,
        session_key_rule=sec.get("session_key_rule") or None,
    )


def builtin_selftest_lines(name: str) -> list[str]:
    path = resources.files("logprompt.adapters").joinpath(f"{name}_selftest.log")
    return path.read_text().splitlines()


def _to_float(text):
    try:
        return float(text)
    except (TypeError, ValueError):
        return None


def parse_log_line(raw: Union[str, bytes], adapter: AdapterSpec, index: int) -> Union[LogRecord, ParseReject]:
    """Split one raw line into header fields and content.

    ``index`` is the source line number; callers renumber accepted records.
    """
    if isinstance(raw, bytes):
        try:
            raw = raw.decode("utf-8")
        except UnicodeDecodeError:
            return ParseReject(index, raw.decode("utf-8", errors="replace"), "bad_utf8")
    line = raw.rstrip("\r\n")
    if not line.strip():
        return ParseReject(index, line, "empty")
    m = adapter._header.match(line)
    if m is None:
        return ParseReject(index, line, "header_mismatch")
    content = (m.group("content") or "").strip()
    if not content:
        return ParseReject(index, line, "empty_content")
    groups = m.groupdict()
    label = adapter._label.apply(groups) if adapter._label is not None else None
    return LogRecord(
        index=index,
        content=content,
        line_no=index,
        timestamp=_to_float(groups.get("timestamp")),
        session_key=adapter.session_key(content),
        message_label=label,
    )


def stream_dataset(path, adapter: AdapterSpec, report: Optional[IngestReport] = None,
                   rejects: Optional[list] = None) -> Iterator[LogRecord]:
    """Yield records in file order, updating ``report`` (and ``rejects``) as it goes."""
    path = Path(path)
    if report is None:
        report = IngestReport()
    try:
        fh = open(path, "rb")
    except OSError as exc:
        raise IngestError(f"cannot read log file {path}: {exc}") from exc
    with fh:
        for line_no, raw in enumerate(fh):
            report.total += 1
            item = parse_log_line(raw, adapter, line_no)
            if isinstance(item, ParseReject):
                report.rejected += 1
                if rejects is not None:
                    rejects.append(item)
                continue
            item.index = report.parsed
            report.parsed += 1
            yield item


@dataclass
class IngestResult:
    records: list
    report: IngestReport
    rejects: list


def load_dataset(path, adapter: AdapterSpec) -> IngestResult:
    report = IngestReport()
    rejects: list = []
    records = list(stream_dataset(path, adapter, report, rejects))
    return IngestResult(records, report, rejects)


def write_rejects(rejects, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in rejects:
            fh.write(json.dumps(asdict(r)) + "\n")
