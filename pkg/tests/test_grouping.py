import pytest

from conftest import make_records
from logprompt.grouping import (GroupingError, LogSequence, WindowSpec, group_by_session, group_by_window,
                                label_window, load_label_table, read_sequences, window_starts, write_sequences)
from logprompt.ingest import ANOMALOUS, NORMAL


def brute_force_windows(n, w, step, tail):
    """Enumerate windows index by index, independently of window_starts."""
    out = []
    start = 0
    while start < n:
        members = [i for i in range(start, start + w) if i < n]
        if len(members) == w or tail == "emit_short":
            out.append(members)
        start += step
    return out


def test_exact_partition():
    seqs = group_by_window(make_records([NORMAL] * 10), WindowSpec(2, 2))
    assert len(seqs) == 5
    assert all(len(s.messages) == 2 for s in seqs)
    assert [s.order_key for s in seqs] == [0, 2, 4, 6, 8]


def test_emit_short_tail():
    seqs = group_by_window(make_records([NORMAL] * 7), WindowSpec(3, 2, "emit_short"))
    assert [s.order_key for s in seqs] == [0, 2, 4, 6]
    assert [len(s.messages) for s in seqs] == [3, 3, 3, 1]
    assert [s.messages for s in seqs] == [[r.content for r in make_records([NORMAL] * 7)][i:i + 3]
                                          for i in (0, 2, 4, 6)]


@pytest.mark.parametrize("tail", ["drop", "emit_short"])
def test_window_count_matches_brute_force_small(tail):
    for n in range(0, 31):
        for w in range(1, 7):
            for step in range(1, 7):
                expect = brute_force_windows(n, w, step, tail)
                starts = list(window_starts(n, WindowSpec(w, step, tail)))
                assert starts == [m[0] for m in expect], (n, w, step)


def test_overlapping_windows_share_members():
    recs = make_records([NORMAL] * 6)
    seqs = group_by_window(recs, WindowSpec(4, 1))
    assert len(seqs) == 3
    assert seqs[1].messages == [r.content for r in recs[1:5]]


@pytest.mark.parametrize("w,step", [(0, 1), (1, 0), (-3, 2)])
def test_bad_window_spec(w, step):
    with pytest.raises(GroupingError):
        WindowSpec(w, step)
    with pytest.raises(GroupingError):
        WindowSpec(3, 3, "pad")


def test_label_window():
    assert label_window(make_records([NORMAL] * 5)) == NORMAL
    one = [NORMAL] * 100
    one[57] = ANOMALOUS
    assert label_window(make_records(one)) == ANOMALOUS
    assert label_window(make_records([ANOMALOUS] * 4)) == ANOMALOUS
    with pytest.raises(GroupingError, match="record 1"):
        label_window(make_records([NORMAL, None]))


def test_session_grouping():
    recs = make_records([None] * 3, contents=["a1", "b1", "a2"], keys=["blk_A", "blk_B", "blk_A"])
    seqs = group_by_session(recs, {"blk_A": ANOMALOUS, "blk_B": NORMAL})
    assert [s.id for s in seqs] == ["blk_A", "blk_B"]
    assert seqs[0].messages == ["a1", "a2"]
    assert seqs[0].label == ANOMALOUS and seqs[1].label == NORMAL
    assert [s.order_key for s in seqs] == [0, 1]


def test_session_grouping_errors():
    recs = make_records([None] * 2, keys=["blk_A", None])
    with pytest.raises(GroupingError, match="record 1"):
        group_by_session(recs, {"blk_A": NORMAL})
    with pytest.raises(GroupingError, match="blk_Z"):
        group_by_session(make_records([None], keys=["blk_Z"]), {"blk_A": NORMAL})


def test_label_table(tmp_path):
    p = tmp_path / "anomaly_label.csv"
    p.write_text("BlockId,Label\nblk_1,Normal\nblk_2,Anomaly\nblk_3,1\n")
    assert load_label_table(p) == {"blk_1": NORMAL, "blk_2": ANOMALOUS, "blk_3": ANOMALOUS}
    p.write_text("blk_1,maybe\n")
    with pytest.raises(GroupingError):
        load_label_table(p)


def test_sequence_round_trip(tmp_path):
    seqs = [LogSequence("w0", ["a <*>", "b"], NORMAL, 0), LogSequence("w2", ["ü"], ANOMALOUS, 2)]
    write_sequences(seqs, tmp_path / "s.jsonl")
    assert read_sequences(tmp_path / "s.jsonl") == seqs
