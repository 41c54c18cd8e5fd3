"""Low-rank adapters on frozen linear layers."""
from __future__ import annotations

import math

import torch
from torch import nn


class AdapterError(ValueError):
    pass


class LoRALinear(nn.Module):
    """``base(x) + scale * (x A^T) B^T`` with ``base`` frozen.

    ``B`` starts at zero, so a freshly wrapped layer reproduces ``base`` exactly.
    """

    def __init__(self, base: nn.Linear, rank: int, alpha: float = None, dropout: float = 0.0):
        super().__init__()
        d_in, d_out = base.in_features, base.out_features
        if rank <= 0:
            raise AdapterError(f"adapter rank must be positive, got {rank}")
        if rank >= min(d_in, d_out):
            raise AdapterError(f"adapter rank {rank} must be below min({d_in}, {d_out})")
        self.base = base
        for p in self.base.parameters():
            p.requires_grad_(False)
        self.rank = rank
        self.scale = (alpha if alpha is not None else rank) / rank
        dev, dt = base.weight.device, base.weight.dtype
        self.lora_A = nn.Parameter(torch.empty(rank, d_in, device=dev, dtype=dt))
        self.lora_B = nn.Parameter(torch.zeros(d_out, rank, device=dev, dtype=dt))
        nn.init.kaiming_uniform_(self.lora_A, a=math.sqrt(5))
        self.dropout = nn.Dropout(dropout) if dropout > 0 else nn.Identity()

    @property
    def in_features(self):
        return self.base.in_features

    @property
    def out_features(self):
        return self.base.out_features

    @property
    def weight(self):
        return self.base.weight

    def forward(self, x):
        return self.base(x) + (self.dropout(x) @ self.lora_A.t() @ self.lora_B.t()) * self.scale


def attach_adapters(model: nn.Module, rank: int, targets, alpha: float = None, dropout: float = 0.0):
    """Freeze every parameter of ``model`` and wrap matching ``nn.Linear`` children.

    ``targets`` holds attribute names (``"q"``, ``"q_proj"``, ...); a linear
    layer is wrapped when its attribute name is in ``targets``.  Returns the
    list of ``(qualified_name, LoRALinear)`` pairs that were attached.
    """
    if rank is None or int(rank) <= 0:
        raise AdapterError(f"adapter rank must be positive, got {rank}")
    targets = set(targets)
    for p in model.parameters():
        p.requires_grad_(False)
    found = []
    for parent_name, parent in list(model.named_modules()):
        for child_name, child in list(parent.named_children()):
            if child_name in targets and isinstance(child, nn.Linear):
                found.append((f"{parent_name}.{child_name}".lstrip("."), parent, child_name, child))
    if not found:
        raise AdapterError(f"no linear layers named {sorted(targets)} found")
    # Validate everything before mutating anything.
    for qual, _, _, lin in found:
        if rank >= min(lin.in_features, lin.out_features):
            raise AdapterError(f"adapter rank {rank} too large for {qual} ({lin.in_features}x{lin.out_features})")
    attached = []
    for qual, parent, child_name, lin in found:
        wrapped = LoRALinear(lin, rank, alpha=alpha, dropout=dropout)
        setattr(parent, child_name, wrapped)
        attached.append((qual, wrapped))
    return attached


def adapter_parameters(model: nn.Module) -> list:
    return [p for n, p in model.named_parameters() if "lora_" in n]


def expected_adapter_count(shapes, rank: int) -> int:
    """Number of adapter weights for linear layers of the given ``(d_in, d_out)`` shapes."""
    return sum(rank * (d_in + d_out) for d_in, d_out in shapes)
