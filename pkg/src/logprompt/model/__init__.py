from .network import (ANSWER_TEXT, PREFIX_TEXT, SUFFIX_TEXT, UNDECIDED, DecoderConfig, EncoderConfig,
                      ModelConfig, ModelError, PromptAssembly, PromptClassifier, Verdict, build_tiny_model,
                      parse_verdict)
from .lora import AdapterError, LoRALinear, attach_adapters
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint


def build_model(cfg: ModelConfig, messages=(), seed: int = 0) -> PromptClassifier:
    """Fresh model for ``cfg.backbone`` (``tiny`` or ``pretrained``)."""
    if cfg.backbone == "tiny":
        return build_tiny_model(messages, cfg, seed=seed)
    if cfg.backbone == "pretrained":
        import torch
        from .hf import HFDecoderBackend, HFEncoderBackend

        if not cfg.encoder_path or not cfg.decoder_path:
            raise ModelError("pretrained backbone needs encoder_path and decoder_path")
        torch.manual_seed(seed)
        enc = HFEncoderBackend(cfg.encoder_path, cfg.encoder.max_message_tokens, cfg.quantize_base)
        dec = HFDecoderBackend(cfg.decoder_path, cfg.quantize_base)
        return PromptClassifier(enc, dec, cfg)
    raise ModelError(f"unknown backbone {cfg.backbone!r}")


__all__ = [
    "ANSWER_TEXT", "PREFIX_TEXT", "SUFFIX_TEXT", "UNDECIDED", "AdapterError", "CheckpointError",
    "DecoderConfig", "EncoderConfig", "LoRALinear", "ModelConfig", "ModelError", "PromptAssembly",
    "PromptClassifier", "Verdict", "attach_adapters", "build_model", "build_tiny_model", "load_checkpoint",
    "parse_verdict", "save_checkpoint",
]
