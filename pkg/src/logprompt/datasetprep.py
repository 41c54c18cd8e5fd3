"""Train/test splitting and minority-class oversampling."""
from __future__ import annotations

import math
import random
from dataclasses import asdict, dataclass
from typing import Optional

from .ingest import ANOMALOUS, NORMAL

SPLIT_MODES = ("random", "chronological")


class PrepError(ValueError):
    pass


@dataclass(frozen=True)
class SplitSpec:
    ratio: float = 0.8
    mode: str = "random"
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.ratio < 1.0:
            raise PrepError(f"split ratio must lie in (0, 1), got {self.ratio}")
        if self.mode not in SPLIT_MODES:
            raise PrepError(f"split mode must be one of {SPLIT_MODES}, got {self.mode!r}")


def train_size(n: int, ratio: float) -> int:
    # Floor, clamped so both sides are non-empty (575,061 * 0.8 -> 460,048).
    k = math.floor(ratio * n + 1e-9)
    return min(max(k, 1), n - 1)


def split(sequences, spec: SplitSpec):
    """Return ``(train, test)``.

    Random mode shuffles with ``spec.seed`` before cutting; chronological mode
    sorts by ``order_key`` so every training sequence precedes every test one.
    """
    seqs = list(sequences)
    n = len(seqs)
    if n < 2:
        raise PrepError(f"need at least 2 sequences to split, got {n}")
    if spec.mode == "chronological":
        if any(s.order_key is None for s in seqs):
            raise PrepError("chronological split needs an order_key on every sequence")
        seqs.sort(key=lambda s: s.order_key)
    else:
        random.Random(spec.seed).shuffle(seqs)
    k = train_size(n, spec.ratio)
    return seqs[:k], seqs[k:]


@dataclass
class OversampleReport:
    alpha: Optional[float]
    beta: float
    sample_num: int
    minority_label: Optional[str]
    minority_before: int
    minority_after: int
    total_after: int

    @property
    def changed(self) -> bool:
        return self.total_after != self.sample_num

    def as_dict(self) -> dict:
        return asdict(self)


def oversample_target(alpha: float, beta: float, sample_num: int) -> int:
    """Minority count that brings the minority fraction to ``beta``.

    Keeping the majority count ``(1 - alpha) * sample_num`` fixed, the minority
    must grow to ``beta * (1 - alpha) / (1 - beta) * sample_num``; rounded to
    the nearest integer.
    """
    return int(math.floor(beta * (1.0 - alpha) / (1.0 - beta) * sample_num + 0.5))


def _minority(train):
    n_anom = sum(1 for s in train if s.label == ANOMALOUS)
    n_norm = len(train) - n_anom
    # Ties go to the anomalous class.
    if n_anom <= n_norm:
        return ANOMALOUS, n_anom
    return NORMAL, n_norm


def oversample_minority(train, beta: float, seed: int = 0):
    """Duplicate minority-class sequences until their share reaches ``beta``.

    Returns ``(new_train, OversampleReport)``.  When ``beta`` is 0 or the
    minority share already reaches ``beta`` the input list is returned as is.
    """
    if not 0.0 <= beta < 1.0:
        raise PrepError(f"beta must lie in [0, 1), got {beta}")
    train = list(train)
    total = len(train)
    if beta == 0.0:
        label, m = _minority(train) if train else (None, 0)
        alpha = m / total if total else None
        return train, OversampleReport(alpha, beta, total, label, m, m, total)
    if total == 0:
        raise PrepError("cannot oversample an empty training set")
    label, m = _minority(train)
    if m == 0:
        raise PrepError("training set holds a single class; minority share is undefined")
    alpha = m / total
    target = oversample_target(alpha, beta, total)
    if alpha >= beta or target <= m:
        return train, OversampleReport(alpha, beta, total, label, m, m, total)

    rng = random.Random(seed)
    pool = [s for s in train if s.label == label]
    extra = [pool[rng.randrange(m)] for _ in range(target - m)]
    out = train + extra
    rng.shuffle(out)
    return out, OversampleReport(alpha, beta, total, label, m, target, len(out))
