"""Encoder -> projector -> decoder prompt classifier.

A log sequence of N masked messages becomes N semantic vectors (one encoder
pass per message), a linear projector maps them into the decoder's
token-embedding space, and they are spliced between the embedded prefix and
question texts.  The decoder then answers with one of two fixed sentences.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import torch
import torch.nn.functional as F
from torch import nn

from ..ingest import ANOMALOUS, NORMAL
from .lora import adapter_parameters, attach_adapters
from .tiny import DECODER_TARGETS, ENCODER_TARGETS, TinyDecoder, TinyEncoder
from .tokenizer import WordTokenizer

log = logging.getLogger(__name__)

PREFIX_TEXT = "Below is a sequence of system log messages:"
SUFFIX_TEXT = ". Is this sequence normal or anomalous?"
ANSWER_TEXT = {
    ANOMALOUS: "The sequence is anomalous.",
    NORMAL: "The sequence is normal.",
}
UNDECIDED = "undecided"


class ModelError(ValueError):
    pass


@dataclass
class EncoderConfig:
    d_enc: int = 64
    layers: int = 2
    heads: int = 4
    max_message_tokens: int = 128
    vocab_size: int = 4096


@dataclass
class DecoderConfig:
    d_dec: int = 128
    layers: int = 2
    heads: int = 4
    max_positions: int = 256
    vocab_size: int = 1024


@dataclass
class ModelConfig:
    backbone: str = "tiny"
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    decoder: DecoderConfig = field(default_factory=DecoderConfig)
    adapter_rank: int = 8
    adapter_alpha: float = 16.0
    max_answer_tokens: int = 8
    encoder_path: Optional[str] = None
    decoder_path: Optional[str] = None
    quantize_base: bool = False


@dataclass
class PromptAssembly:
    matrix: torch.Tensor  # (A + N + Q) x d_dec
    A: int
    N: int
    Q: int

    @property
    def rows(self) -> int:
        return self.matrix.shape[0]


@dataclass
class Verdict:
    label: str
    raw_text: str

    @property
    def predicted(self) -> str:
        """Label used for scoring; undecided answers count as normal."""
        return ANOMALOUS if self.label == ANOMALOUS else NORMAL


def parse_verdict(text: str) -> Verdict:
    low = text.lower()
    if "anomalous" in low:
        return Verdict(ANOMALOUS, text)
    if "normal" in low:
        return Verdict(NORMAL, text)
    return Verdict(UNDECIDED, text)


# ---------------------------------------------------------------------------
# backbones


class TinyEncoderBackend(nn.Module):
    def __init__(self, tokenizer: WordTokenizer, cfg: EncoderConfig):
        super().__init__()
        self.tokenizer = tokenizer
        self.cfg = cfg
        self.d = cfg.d_enc
        self.model = TinyEncoder(len(tokenizer), cfg.d_enc, cfg.layers, cfg.heads, cfg.max_message_tokens)
        self.cls_id = tokenizer.token_id("[CLS]")
        self.adapter_targets = ENCODER_TARGETS

    def tokenize(self, messages: Sequence[str]):
        limit = self.cfg.max_message_tokens
        rows = [[self.cls_id] + self.tokenizer.encode(m)[: limit - 1] for m in messages]
        width = max(len(r) for r in rows)
        ids = torch.full((len(rows), width), self.tokenizer.pad_id, dtype=torch.long)
        mask = torch.zeros((len(rows), width), dtype=torch.long)
        for i, r in enumerate(rows):
            ids[i, : len(r)] = torch.tensor(r)
            mask[i, : len(r)] = 1
        return ids, mask

    def forward(self, ids, mask):
        return self.model(ids, mask)


class TinyDecoderBackend(nn.Module):
    def __init__(self, tokenizer: WordTokenizer, cfg: DecoderConfig):
        super().__init__()
        self.tokenizer = tokenizer
        self.cfg = cfg
        self.d = cfg.d_dec
        self.max_positions = cfg.max_positions
        self.model = TinyDecoder(len(tokenizer), cfg.d_dec, cfg.layers, cfg.heads, cfg.max_positions)
        self.bos_id = tokenizer.token_id("[BOS]")
        self.eos_id = tokenizer.token_id("[EOS]")
        self.vocab_size = len(tokenizer)
        self.adapter_targets = DECODER_TARGETS

    def text_ids(self, text: str, bos: bool = False) -> list:
        return ([self.bos_id] if bos else []) + self.tokenizer.encode(text)

    def decode(self, ids) -> str:
        return self.tokenizer.decode(ids)

    def embed(self, ids):
        return self.model.embed_tokens(ids)

    def forward(self, inputs_embeds, attention_mask, last=None):
        return self.model(inputs_embeds, attention_mask, last=last)


ENCODER_SPECIALS = ("[PAD]", "[UNK]", "[CLS]")
DECODER_SPECIALS = ("[PAD]", "[UNK]", "[BOS]", "[EOS]")


def build_tiny_tokenizers(messages, cfg: ModelConfig):
    """Word vocabularies for the tiny encoder (lower-cased) and decoder (template words first)."""
    messages = list(messages)
    enc_tok = WordTokenizer.build(messages, specials=ENCODER_SPECIALS, lowercase=True,
                                  max_size=cfg.encoder.vocab_size)
    templates = [PREFIX_TEXT, SUFFIX_TEXT, *ANSWER_TEXT.values()]
    dec_tok = WordTokenizer.build(messages, specials=DECODER_SPECIALS, lowercase=False,
                                  max_size=cfg.decoder.vocab_size, extra=templates)
    return enc_tok, dec_tok


# ---------------------------------------------------------------------------


class PromptClassifier(nn.Module):
    def __init__(self, encoder: nn.Module, decoder: nn.Module, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.encoder = encoder
        self.decoder = decoder
        self.projector = nn.Linear(encoder.d, decoder.d)
        self.prefix_ids = decoder.text_ids(PREFIX_TEXT, bos=True)
        self.suffix_ids = decoder.text_ids(SUFFIX_TEXT)
        self.answer_ids = {lab: decoder.text_ids(txt) + [decoder.eos_id] for lab, txt in ANSWER_TEXT.items()}
        self.A = len(self.prefix_ids)
        self.Q = len(self.suffix_ids)
        reserve = max(cfg.max_answer_tokens, max(len(a) for a in self.answer_ids.values()))
        self.max_messages = decoder.max_positions - self.A - self.Q - reserve
        if self.max_messages < 1:
            raise ModelError(f"decoder position budget {decoder.max_positions} too small for the prompt template")
        self.adapters_attached = False

    # -- parameter groups --------------------------------------------------

    def attach_adapters(self, rank: Optional[int] = None, alpha: Optional[float] = None):
        rank = self.cfg.adapter_rank if rank is None else rank
        alpha = self.cfg.adapter_alpha if alpha is None else alpha
        attach_adapters(self.encoder, rank, self.encoder.adapter_targets, alpha=alpha)
        attach_adapters(self.decoder, rank, self.decoder.adapter_targets, alpha=alpha)
        self.adapters_attached = True
        return self

    def parameter_groups(self) -> dict:
        return {
            "encoder_adapters": adapter_parameters(self.encoder),
            "projector": list(self.projector.parameters()),
            "decoder_adapters": adapter_parameters(self.decoder),
        }

    @property
    def device(self):
        return self.projector.weight.device

    @property
    def dtype(self):
        return self.projector.weight.dtype

    # -- forward pieces ----------------------------------------------------

    def fit_messages(self, messages: Sequence[str]) -> list:
        """Keep the most recent messages that fit the decoder's position budget."""
        messages = list(messages)
        if len(messages) > self.max_messages:
            log.warning("sequence of %d messages truncated to the last %d (position budget %d)",
                        len(messages), self.max_messages, self.decoder.max_positions)
            messages = messages[-self.max_messages:]
        return messages

    def encode_batch(self, batch: Sequence[Sequence[str]], chunk: int = 512) -> list:
        """Semantic vectors for each message list; identical messages are encoded once."""
        for msgs in batch:
            if len(msgs) == 0:
                raise ModelError("cannot encode an empty message list")
            if len(msgs) > self.max_messages:
                raise ModelError(f"{len(msgs)} messages exceed the cap of {self.max_messages}")
        slot: dict = {}
        uniq: list = []
        for msgs in batch:
            for m in msgs:
                if m not in slot:
                    slot[m] = len(uniq)
                    uniq.append(m)
        parts = []
        for i in range(0, len(uniq), chunk):
            ids, mask = self.encoder.tokenize(uniq[i:i + chunk])
            parts.append(self.encoder(ids.to(self.device), mask.to(self.device)))
        table = torch.cat(parts, 0)
        out = []
        for msgs in batch:
            idx = torch.tensor([slot[m] for m in msgs], device=self.device)
            out.append(table.index_select(0, idx))
        return out

    def encode_messages(self, messages: Sequence[str]) -> torch.Tensor:
        return self.encode_batch([messages])[0]

    def project(self, C: torch.Tensor) -> torch.Tensor:
        if C.shape[-1] != self.projector.in_features:
            raise ModelError(f"semantic vectors have width {C.shape[-1]}, projector expects {self.projector.in_features}")
        return self.projector(C)

    def _template_embeds(self):
        dev = self.device
        e1 = self.decoder.embed(torch.tensor(self.prefix_ids, device=dev))
        e3 = self.decoder.embed(torch.tensor(self.suffix_ids, device=dev))
        return e1.to(self.dtype), e3.to(self.dtype)

    def assemble_prompt(self, E: torch.Tensor, _templates=None) -> PromptAssembly:
        n = E.shape[0]
        if n == 0:
            raise ModelError("empty message embedding")
        if self.A + n + self.Q > self.decoder.max_positions:
            raise ModelError(
                f"N={n} messages need {self.A + n + self.Q} positions; budget is {self.decoder.max_positions}")
        e1, e3 = _templates if _templates is not None else self._template_embeds()
        return PromptAssembly(torch.cat([e1, E, e3], 0), self.A, n, self.Q)

    def assemble_batch(self, batch: Sequence[Sequence[str]]) -> list:
        templates = self._template_embeds()
        return [self.assemble_prompt(self.project(C), templates) for C in self.encode_batch(batch)]

    def _stack(self, rows: list):
        """Left-pad a list of (T_i x d) matrices to one batch."""
        width = max(r.shape[0] for r in rows)
        d = rows[0].shape[1]
        embeds, masks = [], []
        for r in rows:
            pad = width - r.shape[0]
            embeds.append(torch.cat([r.new_zeros(pad, d), r], 0))
            m = torch.zeros(width, dtype=torch.long, device=r.device)
            m[pad:] = 1
            masks.append(m)
        return torch.stack(embeds), torch.stack(masks)

    def answer_logits(self, assemblies: Sequence[PromptAssembly], labels: Sequence[str]):
        """Logits at the positions that predict each answer token, with the targets."""
        rows, targets = [], []
        for asm, lab in zip(assemblies, labels):
            ans = self.answer_ids[lab]
            ans_t = torch.tensor(ans, device=self.device)
            rows.append(torch.cat([asm.matrix, self.decoder.embed(ans_t[:-1]).to(self.dtype)], 0))
            targets.append(ans_t)
        embeds, mask = self._stack(rows)
        k = max(len(t) for t in targets)
        logits = self.decoder(embeds, mask, last=k)
        picked = [logits[i, k - len(t):] for i, t in enumerate(targets)]
        return torch.cat(picked, 0), torch.cat(targets, 0)

    def answer_loss(self, assemblies: Sequence[PromptAssembly], labels: Sequence[str]) -> torch.Tensor:
        """Cross-entropy averaged over answer tokens; prompt positions carry no loss."""
        logits, targets = self.answer_logits(assemblies, labels)
        # upcast half-precision logits; leave float64 alone
        return F.cross_entropy(logits.to(torch.promote_types(logits.dtype, torch.float32)), targets)

    def sequence_loss(self, batch: Sequence[Sequence[str]], labels: Sequence[str]) -> torch.Tensor:
        batch = [self.fit_messages(m) for m in batch]
        return self.answer_loss(self.assemble_batch(batch), labels)

    @torch.no_grad()
    def generate(self, assemblies: Sequence[PromptAssembly], max_new_tokens: Optional[int] = None) -> list:
        """Greedy decoding; returns decoded answer strings."""
        steps = self.cfg.max_answer_tokens if max_new_tokens is None else max_new_tokens
        embeds, mask = self._stack([a.matrix for a in assemblies])
        b = embeds.shape[0]
        produced = [[] for _ in range(b)]
        done = [False] * b
        for _ in range(steps):
            logits = self.decoder(embeds, mask, last=1)
            nxt = logits[:, -1].argmax(-1)
            for i in range(b):
                if not done[i]:
                    tok = int(nxt[i])
                    if tok == self.decoder.eos_id:
                        done[i] = True
                    else:
                        produced[i].append(tok)
            if all(done):
                break
            embeds = torch.cat([embeds, self.decoder.embed(nxt)[:, None].to(embeds.dtype)], 1)
            mask = torch.cat([mask, mask.new_ones(b, 1)], 1)
        return [self.decoder.decode(p) for p in produced]

    def classify(self, assemblies: Sequence[PromptAssembly]) -> list:
        return [parse_verdict(t) for t in self.generate(assemblies)]

    @torch.no_grad()
    def predict(self, batch: Sequence[Sequence[str]], batch_size: int = 64) -> list:
        was_training = self.training
        self.eval()
        out = []
        for i in range(0, len(batch), batch_size):
            chunk = [self.fit_messages(m) for m in batch[i:i + batch_size]]
            out.extend(self.classify(self.assemble_batch(chunk)))
        self.train(was_training)
        return out


def build_tiny_model(messages, cfg: ModelConfig, seed: int = 0, tokenizers=None) -> PromptClassifier:
    """Fresh tiny model; vocabularies come from ``messages`` unless ``tokenizers`` is given."""
    enc_tok, dec_tok = tokenizers if tokenizers is not None else build_tiny_tokenizers(messages, cfg)
    torch.manual_seed(seed)
    enc = TinyEncoderBackend(enc_tok, cfg.encoder)
    dec = TinyDecoderBackend(dec_tok, cfg.decoder)
    return PromptClassifier(enc, dec, cfg)
