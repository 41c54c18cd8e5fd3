"""Regular-expression parameter masking.

Dynamic parameters (IPs, paths, block ids, numbers, ...) are replaced by the
literal token ``<*>``.  ``mode = raw`` turns masking into the identity so the
same pipeline can be run on unmasked content.
"""
from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional

MASK_TOKEN = "<*>"
MODES = ("re", "raw")


class RuleError(ValueError):
    pass


@dataclass
class MaskingRule:
    name: str
    pattern: str
    replacement: str = MASK_TOKEN
    regex: re.Pattern = field(init=False, repr=False)

    def __post_init__(self):
        try:
            self.regex = re.compile(self.pattern)
        except re.error as exc:
            raise RuleError(f"rule {self.name!r}: pattern does not compile: {exc}") from exc
        # Also catches patterns that can match the empty string.
        if self.regex.search(MASK_TOKEN) is not None:
            raise RuleError(f"rule {self.name!r}: pattern matches the mask token {MASK_TOKEN!r}")

    def apply(self, text: str) -> str:
        return self.regex.sub(lambda _m: self.replacement, text)


@dataclass
class MaskingRuleSet:
    rules: list
    mode: str = "re"

    def __post_init__(self):
        if self.mode not in MODES:
            raise RuleError(f"unknown preprocess mode {self.mode!r}; expected one of {MODES}")

    def __call__(self, content: str) -> str:
        return mask(content, self)

    def with_mode(self, mode: str) -> "MaskingRuleSet":
        return MaskingRuleSet(list(self.rules), mode)

    @property
    def names(self) -> list:
        return [r.name for r in self.rules]


def mask(content: str, rules: MaskingRuleSet) -> str:
    if rules.mode == "raw":
        return content
    for rule in rules.rules:
        content = rule.apply(content)
    return content


def probe_corpus() -> list:
    return resources.files("logprompt.rules").joinpath("probe.txt").read_text().splitlines()


def check_idempotent(rules: MaskingRuleSet, lines: Iterable[str]) -> Optional[str]:
    """Return the first line where masking twice differs from masking once."""
    for line in lines:
        once = mask(line, rules)
        if mask(once, rules) != once:
            return line
    return None


def compile_rules(text: str, mode: Optional[str] = None, probe: Optional[Iterable[str]] = None) -> MaskingRuleSet:
    """Build a rule set from INI text (``[preprocess] mode`` + ordered ``[rules]``).

    ``mode`` overrides the file's mode. The result is checked for idempotence on
    the bundled probe corpus (plus ``probe`` if given).
    """
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise RuleError(f"cannot parse rule config: {exc}") from exc
    file_mode = parser.get("preprocess", "mode", fallback="re")
    rules = []
    if parser.has_section("rules"):
        for name, pattern in parser.items("rules"):
            rules.append(MaskingRule(name, pattern))
    ruleset = MaskingRuleSet(rules, mode or file_mode)
    lines = probe_corpus() + list(probe or [])
    bad = check_idempotent(ruleset, lines)
    if bad is not None:
        raise RuleError(f"rule set is not idempotent on probe line {bad!r}")
    return ruleset


def default_rules_text() -> str:
    return resources.files("logprompt.rules").joinpath("default.ini").read_text()


def load_rules(ref: Optional[str] = None, mode: Optional[str] = None) -> MaskingRuleSet:
    """Load the shipped default rules (``ref`` None or ``"default"``) or a rule file."""
    if ref in (None, "", "default"):
        text = default_rules_text()
    else:
        path = Path(ref)
        if not path.is_file():
            raise RuleError(f"rule config not found: {path}")
        text = path.read_text()
    return compile_rules(text, mode=mode)
