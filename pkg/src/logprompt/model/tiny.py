"""Small from-scratch transformer backbones used for tests and desk-scale runs."""
from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

ENCODER_TARGETS = ("q", "k", "v", "o", "up", "down")
DECODER_TARGETS = ("q", "k", "v", "o", "up", "down")


class SelfAttention(nn.Module):
    def __init__(self, d: int, heads: int):
        super().__init__()
        if d % heads:
            raise ValueError(f"width {d} not divisible by {heads} heads")
        self.heads = heads
        self.q = nn.Linear(d, d)
        self.k = nn.Linear(d, d)
        self.v = nn.Linear(d, d)
        self.o = nn.Linear(d, d)

    def forward(self, x, allowed):
        # allowed: bool [B, 1, T, T], True where query may attend to key
        b, t, d = x.shape
        h = self.heads

        def split(y):
            return y.view(b, t, h, d // h).transpose(1, 2)

        out = F.scaled_dot_product_attention(split(self.q(x)), split(self.k(x)), split(self.v(x)), attn_mask=allowed)
        return self.o(out.transpose(1, 2).reshape(b, t, d))


class Block(nn.Module):
    def __init__(self, d: int, heads: int, mlp_ratio: int = 2):
        super().__init__()
        self.ln1 = nn.LayerNorm(d)
        self.attn = SelfAttention(d, heads)
        self.ln2 = nn.LayerNorm(d)
        self.up = nn.Linear(d, mlp_ratio * d)
        self.down = nn.Linear(mlp_ratio * d, d)

    def forward(self, x, allowed):
        x = x + self.attn(self.ln1(x), allowed)
        return x + self.down(F.gelu(self.up(self.ln2(x))))


class TinyEncoder(nn.Module):
    """Bidirectional encoder; output is ``tanh(W h_cls + b)`` per input message."""

    def __init__(self, vocab_size: int, d: int, layers: int, heads: int, max_tokens: int):
        super().__init__()
        self.d = d
        self.max_tokens = max_tokens
        self.tok = nn.Embedding(vocab_size, d)
        self.pos = nn.Embedding(max_tokens, d)
        self.blocks = nn.ModuleList(Block(d, heads) for _ in range(layers))
        self.ln = nn.LayerNorm(d)
        self.pooler = nn.Linear(d, d)
        nn.init.normal_(self.tok.weight, std=0.5)
        nn.init.normal_(self.pos.weight, std=0.1)

    def forward(self, ids, mask):
        # ids, mask: [M, L]; position 0 holds the classification token
        m, length = ids.shape
        x = self.tok(ids) + self.pos(torch.arange(length, device=ids.device))[None]
        keys = mask.bool()[:, None, None, :]
        eye = torch.eye(length, dtype=torch.bool, device=ids.device)[None, None]
        allowed = keys | eye
        for blk in self.blocks:
            x = blk(x, allowed)
        return torch.tanh(self.pooler(self.ln(x[:, 0])))


class TinyDecoder(nn.Module):
    """Causal decoder driven by input embeddings (so projected vectors can be spliced in)."""

    def __init__(self, vocab_size: int, d: int, layers: int, heads: int, max_positions: int):
        super().__init__()
        self.d = d
        self.max_positions = max_positions
        self.embed_tokens = nn.Embedding(vocab_size, d)
        self.pos = nn.Embedding(max_positions, d)
        self.blocks = nn.ModuleList(Block(d, heads) for _ in range(layers))
        self.ln = nn.LayerNorm(d)
        self.lm_head = nn.Linear(d, vocab_size, bias=False)
        nn.init.normal_(self.embed_tokens.weight, std=1.0)
        nn.init.normal_(self.pos.weight, std=0.1)

    def forward(self, inputs_embeds, attention_mask, last: int = None):
        """Logits ``[B, T, V]``, or only the final ``last`` positions when given."""
        # Left padding: positions count only real tokens.
        b, t, _ = inputs_embeds.shape
        mask = attention_mask.bool()
        positions = (mask.long().cumsum(-1) - 1).clamp(min=0)
        x = inputs_embeds + self.pos(positions)
        causal = torch.tril(torch.ones(t, t, dtype=torch.bool, device=x.device))
        eye = torch.eye(t, dtype=torch.bool, device=x.device)
        allowed = (causal[None, None] & mask[:, None, None, :]) | eye[None, None]
        for blk in self.blocks:
            x = blk(x, allowed)
        if last is not None:
            x = x[:, -last:]
        return self.lm_head(self.ln(x))
