"""End-to-end phases: prepare -> train -> evaluate, plus the beta sweep.

Every phase writes its resolved configuration into its output directory.
Failures are re-raised as :class:`StageError` carrying the phase name and an
error kind (``config``, ``data`` or ``runtime``) that the CLI maps to an exit
code.
"""
from __future__ import annotations

import json
import logging
import time
from pathlib import Path

from . import plotting
from .config import ConfigError, ExperimentConfig
from .datasetprep import PrepError, oversample_minority, split
from .evaluation import REPORT_COLUMNS, evaluate, write_report, write_table
from .grouping import (GroupingError, group_by_session, group_by_window, load_label_table, read_sequences,
                       write_sequences)
from .ingest import ANOMALOUS, IngestError, IngestReport, load_adapter, stream_dataset, write_rejects
from .model import CheckpointError, ModelError, build_model, load_checkpoint, save_checkpoint
from .preprocess import RuleError, load_rules, mask
from .training import TrainingError, run_training

log = logging.getLogger(__name__)

SWEEP_COLUMNS = ("beta",) + REPORT_COLUMNS + ("training_seconds", "train_size")


class StageError(Exception):
    def __init__(self, stage: str, kind: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
        self.kind = kind


class _stage:
    """Context manager translating library exceptions into StageError."""

    KINDS = (
        (ConfigError, "config"), (RuleError, "config"), (CheckpointError, "config"),
        (IngestError, "data"), (GroupingError, "data"), (PrepError, "data"), (FileNotFoundError, "data"),
        (ModelError, "runtime"), (TrainingError, "runtime"),
    )

    def __init__(self, name):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is None or isinstance(exc, StageError):
            return False
        for cls, kind in self.KINDS:
            if isinstance(exc, cls):
                raise StageError(self.name, kind, str(exc)) from exc
        if isinstance(exc, Exception):
            raise StageError(self.name, "runtime", f"{type(exc).__name__}: {exc}") from exc
        return False


def _dump_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_jsonl(rows, path):
    with open(path, "w") as fh:
        for r in rows:
            fh.write(json.dumps(r, sort_keys=True) + "\n")


def _count_anomalous(seqs) -> int:
    return sum(1 for s in seqs if s.label == ANOMALOUS)


def load_sequences(cfg: ExperimentConfig):
    """Ingest, mask and group the configured log file; returns ``(sequences, report, rejects)``."""
    with _stage("ingest"):
        log_file = cfg.get("data", "log_file")
        if not log_file:
            raise ConfigError("data.log_file is not set")
        try:
            adapter = load_adapter(cfg.get("data", "adapter"))
        except IngestError as exc:
            raise ConfigError(str(exc)) from exc
        if not Path(log_file).is_file():
            raise IngestError(f"log file not found: {log_file}")
    with _stage("preprocess"):
        rules = load_rules(cfg.get("preprocess", "rules"), mode=cfg.preprocess_mode)
    with _stage("ingest"):
        report, rejects, records, cache = IngestReport(), [], [], {}
        for rec in stream_dataset(log_file, adapter, report, rejects):
            masked = cache.get(rec.content)
            if masked is None:
                masked = cache[rec.content] = mask(rec.content, rules)
            rec.content = masked
            records.append(rec)
    with _stage("grouping"):
        if cfg.group_mode == "session":
            if not adapter.has_sessions:
                raise ConfigError(f"adapter {adapter.name} extracts no session key; use --group window")
            table_path = cfg.get("data", "label_table")
            if not table_path:
                raise ConfigError("session grouping needs data.label_table")
            seqs = group_by_session(records, load_label_table(table_path))
        else:
            if not adapter.labels_messages:
                raise ConfigError(f"adapter {adapter.name} has no per-message labels; use --group session")
            seqs = group_by_window(records, cfg.window)
        if not seqs:
            raise GroupingError("grouping produced no sequences")
    return seqs, report, rejects


def prepare(cfg: ExperimentConfig, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seqs, report, rejects = load_sequences(cfg)
    with _stage("split"):
        spec = cfg.split_spec
        train, test = split(seqs, spec)
    with _stage("oversample"):
        train_os, osr = oversample_minority(train, cfg.beta, seed=spec.seed)
    write_sequences(train, out / "train_original.jsonl")
    write_sequences(train_os, out / "train.jsonl")
    write_sequences(test, out / "test.jsonl")
    (out / "ingest_report.jsonl").write_text(report.to_json() + "\n")
    write_rejects(rejects, out / "rejects.jsonl")
    manifest = {
        "total_lines": report.total,
        "parsed": report.parsed,
        "rejected": report.rejected,
        "sequences": len(seqs),
        "anomalous_sequences": _count_anomalous(seqs),
        "train_before_oversampling": len(train),
        "train_after_oversampling": len(train_os),
        "train_anomalous": _count_anomalous(train_os),
        "test": len(test),
        "test_anomalous": _count_anomalous(test),
        "alpha": osr.alpha,
        "beta": osr.beta,
        "minority_label": osr.minority_label,
        "minority_before": osr.minority_before,
        "minority_after": osr.minority_after,
        "seed": spec.seed,
        "split_mode": spec.mode,
        "split_ratio": spec.ratio,
        "preprocess": cfg.preprocess_mode,
        "grouping": cfg.group_mode,
    }
    if cfg.group_mode == "window":
        w = cfg.window
        manifest.update(window_size=w.window_size, step=w.step, tail=w.tail_policy)
    _dump_json(manifest, out / "manifest.json")
    cfg.write(out / "config.ini")
    log.info("prepared %d sequences (%d train / %d test) in %s", len(seqs), len(train_os), len(test), out)
    return manifest


def _read_split(data_dir, name):
    path = Path(data_dir) / f"{name}.jsonl"
    if not path.is_file():
        raise StageError("load", "data", f"prepared dataset file missing: {path}")
    return read_sequences(path)


def train_model(cfg: ExperimentConfig, train_seqs, vocab_seqs, out_dir=None):
    """Build a fresh model and run the stage plan; checkpoints go under ``out_dir``."""
    plan = cfg.plan
    with _stage("train"):
        model = build_model(cfg.model, (m for s in vocab_seqs for m in s.messages), seed=plan.seed)
        model.attach_adapters(plan.adapter_rank)

        def on_stage_end(k, m, state):
            if out_dir is not None:
                save_checkpoint(m, Path(out_dir) / "checkpoints" / f"stage{k}", {"stage": k})

        started = time.perf_counter()
        state = run_training(train_seqs, plan, model, on_stage_end)
        wall = time.perf_counter() - started
    summary = {
        "stages_run": state.stages_run,
        "stage_seconds": {str(k): v for k, v in state.stage_seconds.items()},
        "training_seconds": sum(state.stage_seconds.values()),
        "wall_seconds": wall,
        "steps": state.step,
        "samples_used": {str(k): v for k, v in state.samples_used.items()},
        "epoch_losses": state.epoch_losses,
        "train_size": len(train_seqs),
    }
    return model, state, summary


def train(cfg: ExperimentConfig, data_dir, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train_seqs = _read_split(data_dir, "train")
    vocab_path = Path(data_dir) / "train_original.jsonl"
    vocab_seqs = read_sequences(vocab_path) if vocab_path.is_file() else train_seqs
    cfg.write(out / "config.ini")
    model, state, summary = train_model(cfg, train_seqs, vocab_seqs, out)
    save_checkpoint(model, out / "checkpoint", {"stage": "final", "stages_run": state.stages_run})
    _write_jsonl(state.loss_log, out / "loss_log.jsonl")
    _dump_json(summary, out / "train_summary.json")
    if state.loss_log:
        plotting.plot_loss_curve(state.loss_log, out / "loss_curve.png")
    return model, state, summary


def evaluate_checkpoint(cfg: ExperimentConfig, checkpoint, data_dir, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    test = _read_split(data_dir, "test")
    with _stage("evaluate"):
        model = load_checkpoint(checkpoint, cfg.model)
        report, verdicts = evaluate(model, test)
    write_report(report, out)
    _write_jsonl([{"id": s.id, "label": s.label, "verdict": v.label, "raw_text": v.raw_text}
                  for s, v in zip(test, verdicts)], out / "predictions.jsonl")
    cfg.write(out / "config.ini")
    return report


def sweep_beta(cfg: ExperimentConfig, data_dir, betas, out_dir) -> list:
    betas = list(betas)
    if not betas:
        raise StageError("sweep", "config", "empty beta list")
    for b in betas:
        if not 0.0 <= b < 1.0:
            raise StageError("sweep", "config", f"beta {b} outside [0, 1)")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    original = _read_split(data_dir, "train_original")
    test = _read_split(data_dir, "test")
    cfg.write(out / "config.ini")
    rows = []
    for b in betas:
        run_dir = out / f"beta_{b:g}"
        run_dir.mkdir(exist_ok=True)
        run_cfg = cfg.copy(oversample__beta=b)
        run_cfg.write(run_dir / "config.ini")
        with _stage("oversample"):
            train_seqs, _ = oversample_minority(original, b, seed=run_cfg.split_spec.seed)
        model, state, summary = train_model(run_cfg, train_seqs, original)
        with _stage("evaluate"):
            report, _ = evaluate(model, test)
        write_report(report, run_dir)
        _dump_json(summary, run_dir / "train_summary.json")
        row = {"beta": b, **report.row(None), "training_seconds": summary["training_seconds"],
               "train_size": len(train_seqs)}
        rows.append(row)
        log.info("beta=%g f1=%s train_size=%d training_seconds=%.1f", b, row["f1"], len(train_seqs),
                 summary["training_seconds"])
    write_table(rows, SWEEP_COLUMNS, out / "beta_sweep.csv")
    _write_jsonl([{k: (None if v == "NA" else v) for k, v in r.items()} for r in rows], out / "beta_sweep.jsonl")
    plotting.plot_beta_sweep(rows, out / "beta_sweep.png")
    return rows
