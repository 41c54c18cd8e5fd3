import random
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from logprompt.datasetprep import PrepError, SplitSpec, oversample_minority, oversample_target, split, train_size
from logprompt.grouping import LogSequence
from logprompt.ingest import ANOMALOUS, NORMAL


def seqs_with(n_anom, n_norm, shuffle_seed=None):
    out = [LogSequence(f"a{i}", [f"x{i}"], ANOMALOUS, i) for i in range(n_anom)]
    out += [LogSequence(f"n{i}", [f"y{i}"], NORMAL, n_anom + i) for i in range(n_norm)]
    if shuffle_seed is not None:
        random.Random(shuffle_seed).shuffle(out)
    return out


def test_hdfs_split_sizes():
    assert train_size(575061, 0.8) == 460048
    assert 575061 - train_size(575061, 0.8) == 115013


def test_chronological_split():
    seqs = seqs_with(3, 7, shuffle_seed=1)
    train, test = split(seqs, SplitSpec(0.8, "chronological"))
    assert [s.order_key for s in train] == list(range(8))
    assert [s.order_key for s in test] == [8, 9]


def test_random_split_deterministic_and_disjoint():
    seqs = seqs_with(20, 80)
    a = split(seqs, SplitSpec(0.8, "random", seed=3))
    b = split(seqs, SplitSpec(0.8, "random", seed=3))
    c = split(seqs, SplitSpec(0.8, "random", seed=4))
    assert a == b
    assert a != c
    assert len(a[0]) == 80 and len(a[1]) == 20
    assert {s.id for s in a[0]}.isdisjoint({s.id for s in a[1]})


def test_split_errors():
    with pytest.raises(PrepError):
        split(seqs_with(1, 0), SplitSpec())
    with pytest.raises(PrepError):
        SplitSpec(1.0)
    with pytest.raises(PrepError):
        SplitSpec(0.8, "sideways")


def test_worked_example():
    # alpha=0.1, beta=0.3, 1000 samples: 0.3 * 0.9 / 0.7 * 1000 = 385.71 -> 386
    assert oversample_target(0.1, 0.3, 1000) == 386
    out, rep = oversample_minority(seqs_with(100, 900), 0.3, seed=0)
    assert rep.minority_after == 386
    assert len(out) == 1286
    n_anom = sum(1 for s in out if s.label == ANOMALOUS)
    assert n_anom == 386
    assert abs(n_anom / len(out) - 0.3002) < 1e-4


def test_unchanged_cases():
    train = seqs_with(400, 600)
    for beta in (0.0, 0.3):
        out, rep = oversample_minority(train, beta)
        assert out == train and not rep.changed


def test_oversample_errors():
    with pytest.raises(PrepError):
        oversample_minority(seqs_with(1, 9), 1.0)
    with pytest.raises(PrepError):
        oversample_minority(seqs_with(0, 9), 0.3)


def test_normal_minority():
    out, rep = oversample_minority(seqs_with(90, 10), 0.3)
    assert rep.minority_label == NORMAL
    assert sum(1 for s in out if s.label == NORMAL) == oversample_target(0.1, 0.3, 100)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 300), st.integers(1, 300), st.floats(0.01, 0.95), st.integers(0, 10))
def test_oversampling_keeps_originals_and_draws_minority_only(m, M, beta, seed):
    n_anom, n_norm = min(m, M), max(m, M)
    train = seqs_with(n_anom, n_norm)
    out, rep = oversample_minority(train, beta, seed=seed)
    before, after = Counter(s.id for s in train), Counter(s.id for s in out)
    assert all(after[k] >= v for k, v in before.items())
    extra = after - before
    assert all(k.startswith("a") for k in extra)
    assert sum(extra.values()) == rep.minority_after - rep.minority_before
