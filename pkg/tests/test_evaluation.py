import csv
import json
import random

import pytest

from conftest import make_sequences
from logprompt.evaluation import (NA, Confusion, EvalError, confusion, evaluate, f1_score, metrics, write_report,
                                  write_table)
from logprompt.ingest import ANOMALOUS, NORMAL
from logprompt.model import Verdict


class ConstantModel:
    def __init__(self, text):
        self.text = text

    def predict(self, batch, batch_size=64):
        from logprompt.model import parse_verdict
        return [parse_verdict(self.text) for _ in batch]


def counting_oracle(preds, labels):
    tp = fp = fn = tn = 0
    for i in range(len(preds)):
        a = preds[i] == "anomalous"
        b = labels[i] == "anomalous"
        tp += a and b
        fp += a and not b
        fn += (not a) and b
        tn += (not a) and (not b)
    return tp, fp, fn, tn


def test_confusion_small_cases():
    assert confusion([ANOMALOUS, NORMAL], [ANOMALOUS, NORMAL]) == Confusion(tp=1, fp=0, fn=0, tn=1)
    c = confusion([NORMAL] * 6, [ANOMALOUS, NORMAL, ANOMALOUS, NORMAL, ANOMALOUS, NORMAL])
    assert (c.fn, c.tp) == (3, 0)
    with pytest.raises(EvalError):
        confusion([NORMAL], [NORMAL, NORMAL])
    with pytest.raises(EvalError):
        confusion([], [])


def test_confusion_matches_oracle():
    rng = random.Random(0)
    for _ in range(200):
        n = rng.randint(1, 50)
        p = [rng.choice((ANOMALOUS, NORMAL)) for _ in range(n)]
        y = [rng.choice((ANOMALOUS, NORMAL)) for _ in range(n)]
        c = confusion(p, y)
        assert (c.tp, c.fp, c.fn, c.tn) == counting_oracle(p, y)


def test_metrics_values():
    r = metrics(Confusion(tp=1))
    assert (r.precision, r.recall, r.f1) == (1.0, 1.0, 1.0)
    assert round(f1_score(0.994, 1.0), 3) == 0.997
    r = metrics(Confusion(tn=5, fn=2))
    assert r.precision is None and r.recall == 0.0 and r.f1 is None
    assert r.row()["precision"] == NA


def test_always_anomalous_and_always_normal():
    test = make_sequences(50, anomaly_every=5)
    rep, _ = evaluate(ConstantModel("The sequence is anomalous."), test)
    assert rep.recall == 1.0 and rep.precision == pytest.approx(10 / 50)
    rep, _ = evaluate(ConstantModel("The sequence is normal."), test)
    assert rep.confusion.tp == 0 and rep.recall == 0.0


def test_undecided_counted_as_normal_and_reported():
    test = make_sequences(10, anomaly_every=2)
    rep, verdicts = evaluate(ConstantModel("banana"), test)
    assert rep.undecided_count == 10
    assert rep.confusion.fn == 5 and rep.confusion.tn == 5
    with pytest.raises(EvalError):
        evaluate(ConstantModel("x"), [])


def test_report_files(tmp_path):
    rep = metrics(Confusion(tp=497, fp=3, fn=0, tn=500), undecided=2, runtime_seconds=1.23456)
    csv_path, jsonl_path = write_report(rep, tmp_path)
    rows = list(csv.DictReader(open(csv_path)))
    assert rows[0]["precision"] == "0.994" and rows[0]["f1"] == "0.997" and rows[0]["undecided"] == "2"
    full = json.loads(open(jsonl_path).read())
    assert full["precision"] == 497 / 500
    rep = metrics(Confusion(tn=3))
    csv_path, jsonl_path = write_report(rep, tmp_path, stem="empty")
    assert list(csv.DictReader(open(csv_path)))[0]["precision"] == "NA"
    assert json.loads(open(jsonl_path).read())["precision"] is None


def test_write_table(tmp_path):
    write_table([{"beta": 0.1, "f1": 0.5, "junk": 1}], ("beta", "f1"), tmp_path / "t.csv")
    assert open(tmp_path / "t.csv").read().splitlines() == ["beta,f1", "0.1,0.5"]


def test_verdict_predicted():
    assert Verdict("undecided", "??").predicted == NORMAL
