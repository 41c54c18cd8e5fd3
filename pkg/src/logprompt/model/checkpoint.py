"""Checkpoint directories.

Layout::

    manifest.json          d_enc, d_dec, A, Q, templates, vocabulary ids, model config
    encoder.pt             encoder weights (adapters only for pretrained backbones)
    projector.pt
    decoder_adapters.pt
    decoder_base.pt        tiny backbone only
    encoder_vocab.json     tiny backbone only
    decoder_vocab.json     tiny backbone only
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict
from pathlib import Path

import torch

from .network import (ANSWER_TEXT, PREFIX_TEXT, SUFFIX_TEXT, DecoderConfig, EncoderConfig, ModelConfig,
                      PromptClassifier, TinyDecoderBackend, TinyEncoderBackend)
from .tokenizer import WordTokenizer


class CheckpointError(ValueError):
    pass


def _vocab_id(tok) -> str:
    if isinstance(tok, WordTokenizer):
        return "sha256:" + hashlib.sha256(json.dumps(tok.itos).encode()).hexdigest()[:16]
    return getattr(tok, "name_or_path", type(tok).__name__)


def _adapter_state(module) -> dict:
    return {k: v for k, v in module.state_dict().items() if "lora_" in k}


def model_config_from_dict(d: dict) -> ModelConfig:
    d = dict(d)
    enc = EncoderConfig(**d.pop("encoder"))
    dec = DecoderConfig(**d.pop("decoder"))
    return ModelConfig(encoder=enc, decoder=dec, **d)


def save_checkpoint(model: PromptClassifier, path, extra: dict = None) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    tiny = model.cfg.backbone == "tiny"
    if tiny:
        torch.save(model.encoder.model.state_dict(), path / "encoder.pt")
        torch.save({k: v for k, v in model.decoder.model.state_dict().items() if "lora_" not in k},
                   path / "decoder_base.pt")
        model.encoder.tokenizer.save(path / "encoder_vocab.json")
        model.decoder.tokenizer.save(path / "decoder_vocab.json")
    else:
        torch.save(_adapter_state(model.encoder.model), path / "encoder.pt")
    torch.save(model.projector.state_dict(), path / "projector.pt")
    torch.save(_adapter_state(model.decoder.model), path / "decoder_adapters.pt")
    manifest = {
        "backbone": model.cfg.backbone,
        "d_enc": model.encoder.d,
        "d_dec": model.decoder.d,
        "A": model.A,
        "Q": model.Q,
        "prefix": PREFIX_TEXT,
        "suffix": SUFFIX_TEXT,
        "answers": dict(ANSWER_TEXT),
        "encoder_vocab": _vocab_id(model.encoder.tokenizer),
        "decoder_vocab": _vocab_id(model.decoder.tokenizer),
        "adapters": model.adapters_attached,
        "model_config": asdict(model.cfg),
    }
    manifest.update(extra or {})
    with open(path / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return path


def read_manifest(path) -> dict:
    f = Path(path) / "manifest.json"
    if not f.is_file():
        raise CheckpointError(f"no checkpoint manifest at {f}")
    with open(f) as fh:
        return json.load(fh)


def check_compatible(manifest: dict, cfg: ModelConfig) -> None:
    """Raise if the checkpoint disagrees with ``cfg`` on backbone, widths or template."""
    problems = []
    if manifest["backbone"] != cfg.backbone:
        problems.append(f"backbone {manifest['backbone']} != {cfg.backbone}")
    if cfg.backbone == "tiny":
        if manifest["d_enc"] != cfg.encoder.d_enc:
            problems.append(f"d_enc {manifest['d_enc']} != {cfg.encoder.d_enc}")
        if manifest["d_dec"] != cfg.decoder.d_dec:
            problems.append(f"d_dec {manifest['d_dec']} != {cfg.decoder.d_dec}")
    if manifest["prefix"] != PREFIX_TEXT or manifest["suffix"] != SUFFIX_TEXT or manifest["answers"] != ANSWER_TEXT:
        problems.append("prompt template differs")
    if problems:
        raise CheckpointError("checkpoint/config mismatch: " + "; ".join(problems))


def load_checkpoint(path, cfg: ModelConfig = None) -> PromptClassifier:
    path = Path(path)
    manifest = read_manifest(path)
    stored = model_config_from_dict(manifest["model_config"])
    if cfg is not None:
        check_compatible(manifest, cfg)
    if stored.backbone == "tiny":
        enc_tok = WordTokenizer.load(path / "encoder_vocab.json")
        dec_tok = WordTokenizer.load(path / "decoder_vocab.json")
        model = PromptClassifier(TinyEncoderBackend(enc_tok, stored.encoder),
                                 TinyDecoderBackend(dec_tok, stored.decoder), stored)
    else:
        from .hf import HFDecoderBackend, HFEncoderBackend

        model = PromptClassifier(HFEncoderBackend(stored.encoder_path, stored.encoder.max_message_tokens),
                                 HFDecoderBackend(stored.decoder_path), stored)
    if manifest.get("adapters"):
        model.attach_adapters(stored.adapter_rank, stored.adapter_alpha)
    strict = stored.backbone == "tiny"
    if strict:
        model.encoder.model.load_state_dict(torch.load(path / "encoder.pt"))
        base = torch.load(path / "decoder_base.pt")
        base.update(torch.load(path / "decoder_adapters.pt"))
        model.decoder.model.load_state_dict(base)
    else:
        model.encoder.model.load_state_dict(torch.load(path / "encoder.pt"), strict=False)
        model.decoder.model.load_state_dict(torch.load(path / "decoder_adapters.pt"), strict=False)
    model.projector.load_state_dict(torch.load(path / "projector.pt"))
    if (model.encoder.d, model.decoder.d, model.A, model.Q) != (manifest["d_enc"], manifest["d_dec"],
                                                                manifest["A"], manifest["Q"]):
        raise CheckpointError("rebuilt model does not match the manifest widths/template lengths")
    for p in model.parameters():
        p.requires_grad_(False)
    return model
