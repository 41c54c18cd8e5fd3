"""Pretrained backbones loaded through ``transformers``.

The encoder is any BERT-style model whose ``pooler_output`` is the
classification-token vector passed through a linear layer and tanh; the
decoder is any causal LM that accepts ``inputs_embeds``.
"""
from __future__ import annotations

from typing import Sequence

import torch
from torch import nn

ENCODER_TARGETS = ("query", "key", "value", "dense")
DECODER_TARGETS = ("q_proj", "k_proj", "v_proj", "o_proj", "gate_proj", "up_proj", "down_proj")


def _quantization_kwargs(quantize: bool) -> dict:
    if not quantize:
        return {}
    try:
        from transformers import BitsAndBytesConfig
        import bitsandbytes  # noqa: F401
    except ImportError as exc:
        raise RuntimeError("quantize_base needs the bitsandbytes package") from exc
    return {"quantization_config": BitsAndBytesConfig(load_in_4bit=True, bnb_4bit_compute_dtype=torch.bfloat16)}


class HFEncoderBackend(nn.Module):
    def __init__(self, path: str, max_message_tokens: int = 128, quantize: bool = False):
        super().__init__()
        from transformers import AutoModel, AutoTokenizer

        self.path = path
        self.tokenizer = AutoTokenizer.from_pretrained(path)
        self.model = AutoModel.from_pretrained(path, **_quantization_kwargs(quantize))
        if getattr(self.model, "pooler", None) is None:
            raise ValueError(f"{path}: encoder has no pooler (classification-token linear + tanh)")
        self.d = self.model.config.hidden_size
        self.max_message_tokens = max_message_tokens
        self.adapter_targets = ENCODER_TARGETS

    def tokenize(self, messages: Sequence[str]):
        enc = self.tokenizer(list(messages), padding=True, truncation=True,
                             max_length=self.max_message_tokens, return_tensors="pt")
        return enc["input_ids"], enc["attention_mask"]

    def forward(self, ids, mask):
        return self.model(input_ids=ids, attention_mask=mask).pooler_output


class HFDecoderBackend(nn.Module):
    def __init__(self, path: str, quantize: bool = False):
        super().__init__()
        from transformers import AutoModelForCausalLM, AutoTokenizer

        self.path = path
        self.tokenizer = AutoTokenizer.from_pretrained(path)
        self.model = AutoModelForCausalLM.from_pretrained(path, **_quantization_kwargs(quantize))
        cfg = self.model.config
        self.d = cfg.hidden_size
        self.max_positions = getattr(cfg, "max_position_embeddings", 2048)
        self.bos_id = self.tokenizer.bos_token_id
        self.eos_id = self.tokenizer.eos_token_id
        if self.eos_id is None:
            raise ValueError(f"{path}: tokenizer defines no end-of-sequence token")
        self.vocab_size = self.model.get_input_embeddings().weight.shape[0]
        self.adapter_targets = DECODER_TARGETS

    def text_ids(self, text: str, bos: bool = False) -> list:
        ids = self.tokenizer(text, add_special_tokens=False)["input_ids"]
        if bos and self.bos_id is not None:
            ids = [self.bos_id] + ids
        return ids

    def decode(self, ids) -> str:
        return self.tokenizer.decode(ids, skip_special_tokens=True)

    def embed(self, ids):
        return self.model.get_input_embeddings()(ids)

    def forward(self, inputs_embeds, attention_mask, last=None):
        positions = (attention_mask.long().cumsum(-1) - 1).clamp(min=0)
        out = self.model(inputs_embeds=inputs_embeds, attention_mask=attention_mask,
                         position_ids=positions, use_cache=False)
        logits = out.logits
        return logits if last is None else logits[:, -last:]
