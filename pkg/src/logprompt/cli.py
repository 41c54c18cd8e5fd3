"""Command-line entry point.

Exit codes: 0 success, 1 configuration error, 2 data error, 3 runtime error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ConfigError, ExperimentConfig
from .pipeline import StageError, evaluate_checkpoint, prepare, sweep_beta, train
from .toy import generate_toy_corpus

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_RUNTIME = 0, 1, 2, 3
_KIND_EXIT = {"config": EXIT_CONFIG, "data": EXIT_DATA, "runtime": EXIT_RUNTIME}

# flag dest -> (section, key)
_OVERRIDES = {
    "log_file": ("data", "log_file"),
    "adapter": ("data", "adapter"),
    "label_table": ("data", "label_table"),
    "preprocess": ("preprocess", "mode"),
    "rules": ("preprocess", "rules"),
    "group": ("grouping", "mode"),
    "window_size": ("grouping", "window_size"),
    "step": ("grouping", "step"),
    "tail": ("grouping", "tail"),
    "split": ("split", "mode"),
    "ratio": ("split", "ratio"),
    "beta": ("oversample", "beta"),
    "preset": ("training", "preset"),
    "backbone": ("model", "backbone"),
    "out": ("output", "dir"),
}


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="experiment config (INI)")
    p.add_argument("--log-file", dest="log_file")
    p.add_argument("--adapter", help="builtin adapter name or adapter INI path")
    p.add_argument("--label-table", dest="label_table", help="session label CSV (session grouping)")
    p.add_argument("--preprocess", choices=("re", "raw"))
    p.add_argument("--rules", help="masking rule file (default: shipped rules)")
    p.add_argument("--group", choices=("session", "window"))
    p.add_argument("--window-size", dest="window_size", type=int)
    p.add_argument("--step", type=int)
    p.add_argument("--tail", choices=("drop", "emit_short"))
    p.add_argument("--split", choices=("random", "chronological"))
    p.add_argument("--ratio", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--seed", type=int, help="global seed (split, sampling, init)")
    p.add_argument("--skip-stage", dest="skip_stage", type=int, choices=(1, 2, 3), action="append", default=[])
    p.add_argument("--backbone", choices=("tiny", "pretrained"))
    p.add_argument("--preset", help="training preset (default, toy)")
    p.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="logprompt", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="ingest, mask, group, split and oversample")
    _common(p)

    p = sub.add_parser("train", help="run the stage plan on a prepared dataset")
    _common(p)
    p.add_argument("--data", required=True, help="prepared dataset directory")

    p = sub.add_parser("evaluate", help="score a checkpoint on the prepared test split")
    _common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)

    p = sub.add_parser("sweep-beta", help="train + evaluate once per oversampling target")
    _common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--betas", required=True, help="comma-separated list, e.g. 0,0.1,0.3,0.5")

    p = sub.add_parser("toy-corpus", help="write a synthetic BGL-format corpus with known labels")
    p.add_argument("path")
    p.add_argument("--sequences", type=int, default=20000)
    p.add_argument("--window", type=int, default=20)
    p.add_argument("--anomaly-rate", dest="anomaly_rate", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    return parser


def resolve_config(args) -> ExperimentConfig:
    overrides = {}
    for dest, key in _OVERRIDES.items():
        value = getattr(args, dest, None)
        if value is not None:
            overrides[key] = value
    if getattr(args, "seed", None) is not None:
        overrides[("split", "seed")] = args.seed
        overrides[("training", "seed")] = args.seed
    for k in getattr(args, "skip_stage", []) or []:
        overrides[("training", f"stage{k}_enabled")] = "false"
    return ExperimentConfig.load(args.config, overrides)


def _out_dir(args, cfg) -> Path:
    return Path(args.out or cfg.get("output", "dir"))


def _parse_betas(text: str) -> list:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"cannot parse --betas {text!r}") from exc


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "toy-corpus":
            summary = generate_toy_corpus(args.path, args.sequences, args.window, args.anomaly_rate, args.seed)
            print(json.dumps(summary))
            return EXIT_OK
        cfg = resolve_config(args)
        out = _out_dir(args, cfg)
        if args.command == "prepare":
            manifest = prepare(cfg, out)
            print(json.dumps(manifest, sort_keys=True))
        elif args.command == "train":
            _, _, summary = train(cfg, args.data, out)
            print(json.dumps({"checkpoint": str(out / "checkpoint"), **summary}, sort_keys=True))
        elif args.command == "evaluate":
            report = evaluate_checkpoint(cfg, args.checkpoint, args.data, out)
            print(json.dumps(report.row(3)))
        elif args.command == "sweep-beta":
            betas = _parse_betas(args.betas)
            rows = sweep_beta(cfg, args.data, betas, out)
            for r in rows:
                print(json.dumps(r))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as exc:
        print(f"{exc.kind} error: {exc}", file=sys.stderr)
        return _KIND_EXIT[exc.kind]
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
