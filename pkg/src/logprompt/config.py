"""Experiment configuration: sectioned key/value INI files with flag overrides.

Precedence, lowest first: built-in defaults, the config file, the
``LOGPROMPT_SEED`` environment variable, command-line flags.  The resolved
merge is what gets written into every output directory.
"""
from __future__ import annotations

import configparser
import io
import os
from pathlib import Path
from typing import Optional

from .datasetprep import SplitSpec
from .grouping import WindowSpec
from .model.network import DecoderConfig, EncoderConfig, ModelConfig
from .training import EpochStagePlan, Stage1Plan, StagePlan

SEED_ENV = "LOGPROMPT_SEED"

DEFAULTS = {
    "data": {"log_file": "", "adapter": "bgl", "label_table": ""},
    "preprocess": {"mode": "re", "rules": "default"},
    "grouping": {"mode": "window", "window_size": "100", "step": "100", "tail": "drop"},
    "split": {"mode": "chronological", "ratio": "0.8", "seed": "0"},
    "oversample": {"beta": "0.3"},
    "training": {
        "preset": "default",
        "stage1_enabled": "true", "stage1_sample_cap": "1000", "stage1_lr": "5e-4",
        "stage1_balance": "0.5", "stage1_epochs": "1",
        "stage2_enabled": "true", "stage2_epochs": "2", "stage2_lr": "5e-5",
        "stage3_enabled": "true", "stage3_epochs": "2", "stage3_lr": "5e-5",
        "batch_size": "16", "weight_decay": "0.01", "quantize_base": "false", "seed": "0",
    },
    "model": {
        "backbone": "tiny", "d_enc": "64", "encoder_layers": "2", "encoder_heads": "4",
        "max_message_tokens": "128", "encoder_vocab_size": "4096",
        "d_dec": "128", "decoder_layers": "2", "decoder_heads": "4", "max_positions": "256",
        "decoder_vocab_size": "1024", "adapter_rank": "8", "adapter_alpha": "16",
        "max_answer_tokens": "8", "encoder_path": "", "decoder_path": "",
    },
    "output": {"dir": "runs/default"},
}

# Learning rates that let the small from-scratch backbones learn within the
# stage budgets; the default preset keeps the published values.
PRESETS = {
    "default": {},
    "toy": {"stage1_lr": "1e-3", "stage2_lr": "1e-3", "stage3_lr": "1e-3"},
}


class ConfigError(ValueError):
    pass


class ExperimentConfig:
    """Thin typed view over a resolved :class:`configparser.ConfigParser`."""

    def __init__(self, parser: configparser.ConfigParser):
        self.parser = parser
        self._validate()

    # -- construction ------------------------------------------------------

    @classmethod
    def load(cls, path: Optional[str] = None, overrides: Optional[dict] = None,
             env: Optional[dict] = None) -> "ExperimentConfig":
        parser = configparser.ConfigParser(interpolation=None)
        parser.read_dict(DEFAULTS)
        user = configparser.ConfigParser(interpolation=None)
        if path:
            p = Path(path)
            if not p.is_file():
                raise ConfigError(f"config file not found: {p}")
            try:
                user.read(p)
            except configparser.Error as exc:
                raise ConfigError(f"cannot parse {p}: {exc}") from exc
        preset = user.get("training", "preset", fallback=None)
        if overrides and ("training", "preset") in overrides:
            preset = overrides[("training", "preset")]
        if preset:
            if preset not in PRESETS:
                raise ConfigError(f"unknown training preset {preset!r}; choose from {sorted(PRESETS)}")
            parser.read_dict({"training": {"preset": preset, **PRESETS[preset]}})
        for section in user.sections():
            if section not in DEFAULTS:
                raise ConfigError(f"unknown config section [{section}]")
            for key, value in user.items(section):
                if key not in DEFAULTS[section]:
                    raise ConfigError(f"unknown key {key!r} in [{section}]")
                parser.set(section, key, value)
        env = os.environ if env is None else env
        if env.get(SEED_ENV):
            parser.set("split", "seed", env[SEED_ENV])
            parser.set("training", "seed", env[SEED_ENV])
        for (section, key), value in (overrides or {}).items():
            if value is None:
                continue
            if section not in DEFAULTS or key not in DEFAULTS[section]:
                raise ConfigError(f"unknown override {section}.{key}")
            parser.set(section, key, str(value))
        return cls(parser)

    def copy(self, **overrides) -> "ExperimentConfig":
        """New config with ``section__key=value`` overrides applied."""
        parser = configparser.ConfigParser(interpolation=None)
        parser.read_string(self.dumps())
        for k, v in overrides.items():
            section, key = k.split("__", 1)
            parser.set(section, key, str(v))
        return ExperimentConfig(parser)

    def dumps(self) -> str:
        buf = io.StringIO()
        self.parser.write(buf)
        return buf.getvalue()

    def write(self, path) -> None:
        Path(path).write_text(self.dumps())

    def get(self, section, key) -> str:
        return self.parser.get(section, key)

    # -- typed accessors ---------------------------------------------------

    def _int(self, section, key):
        try:
            return self.parser.getint(section, key)
        except ValueError as exc:
            raise ConfigError(f"{section}.{key}: expected an integer") from exc

    def _float(self, section, key):
        try:
            return self.parser.getfloat(section, key)
        except ValueError as exc:
            raise ConfigError(f"{section}.{key}: expected a number") from exc

    def _bool(self, section, key):
        try:
            return self.parser.getboolean(section, key)
        except ValueError as exc:
            raise ConfigError(f"{section}.{key}: expected true/false") from exc

    @property
    def preprocess_mode(self) -> str:
        return self.get("preprocess", "mode")

    @property
    def group_mode(self) -> str:
        return self.get("grouping", "mode")

    @property
    def window(self) -> WindowSpec:
        return WindowSpec(self._int("grouping", "window_size"), self._int("grouping", "step"),
                          self.get("grouping", "tail"))

    @property
    def split_spec(self) -> SplitSpec:
        return SplitSpec(self._float("split", "ratio"), self.get("split", "mode"), self._int("split", "seed"))

    @property
    def beta(self) -> float:
        return self._float("oversample", "beta")

    @property
    def seed(self) -> int:
        return self._int("training", "seed")

    @property
    def plan(self) -> StagePlan:
        t = "training"
        return StagePlan(
            stage1=Stage1Plan(self._bool(t, "stage1_enabled"), self._int(t, "stage1_sample_cap"),
                              self._float(t, "stage1_lr"), self._float(t, "stage1_balance"),
                              self._int(t, "stage1_epochs")),
            stage2=EpochStagePlan(self._bool(t, "stage2_enabled"), self._int(t, "stage2_epochs"),
                                  self._float(t, "stage2_lr")),
            stage3=EpochStagePlan(self._bool(t, "stage3_enabled"), self._int(t, "stage3_epochs"),
                                  self._float(t, "stage3_lr")),
            batch_size=self._int(t, "batch_size"),
            weight_decay=self._float(t, "weight_decay"),
            adapter_rank=self._int("model", "adapter_rank"),
            quantize_base=self._bool(t, "quantize_base"),
            seed=self._int(t, "seed"),
        )

    @property
    def model(self) -> ModelConfig:
        m = "model"
        return ModelConfig(
            backbone=self.get(m, "backbone"),
            encoder=EncoderConfig(self._int(m, "d_enc"), self._int(m, "encoder_layers"),
                                  self._int(m, "encoder_heads"), self._int(m, "max_message_tokens"),
                                  self._int(m, "encoder_vocab_size")),
            decoder=DecoderConfig(self._int(m, "d_dec"), self._int(m, "decoder_layers"),
                                  self._int(m, "decoder_heads"), self._int(m, "max_positions"),
                                  self._int(m, "decoder_vocab_size")),
            adapter_rank=self._int(m, "adapter_rank"),
            adapter_alpha=self._float(m, "adapter_alpha"),
            max_answer_tokens=self._int(m, "max_answer_tokens"),
            encoder_path=self.get(m, "encoder_path") or None,
            decoder_path=self.get(m, "decoder_path") or None,
            quantize_base=self._bool("training", "quantize_base"),
        )

    def _validate(self):
        checks = [
            ("preprocess", "mode", ("re", "raw")),
            ("grouping", "mode", ("session", "window")),
            ("grouping", "tail", ("drop", "emit_short")),
            ("split", "mode", ("random", "chronological")),
            ("model", "backbone", ("tiny", "pretrained")),
        ]
        for section, key, allowed in checks:
            if self.get(section, key) not in allowed:
                raise ConfigError(f"{section}.{key} must be one of {allowed}, got {self.get(section, key)!r}")
        try:
            self.window, self.split_spec, self.plan, self.model  # noqa: B018
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if not 0.0 <= self.beta < 1.0:
            raise ConfigError(f"oversample.beta must lie in [0, 1), got {self.beta}")
        if self.model.adapter_rank <= 0:
            raise ConfigError("model.adapter_rank must be positive")
        if self.model.backbone == "pretrained" and not (self.model.encoder_path and self.model.decoder_path):
            raise ConfigError("the pretrained backbone needs model.encoder_path and model.decoder_path")
