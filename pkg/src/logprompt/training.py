"""Three-stage training schedule.

Stage 1 tunes only the decoder adapters on a small class-balanced sample so the
decoder learns the answer template.  Stage 2 tunes the encoder adapters and the
projector with the decoder fixed.  Stage 3 tunes all adapters and the projector
together.
"""
from __future__ import annotations

import ctypes
import hashlib
import logging
import random
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import torch

from .ingest import ANOMALOUS, NORMAL

log = logging.getLogger(__name__)

STAGE_GROUPS = {
    1: ("decoder_adapters",),
    2: ("encoder_adapters", "projector"),
    3: ("encoder_adapters", "projector", "decoder_adapters"),
}


class TrainingError(ValueError):
    pass


@dataclass
class Stage1Plan:
    enabled: bool = True
    sample_cap: int = 1000
    lr: float = 5e-4
    balance: float = 0.5
    epochs: int = 1


@dataclass
class EpochStagePlan:
    enabled: bool = True
    epochs: int = 2
    lr: float = 5e-5


@dataclass
class StagePlan:
    stage1: Stage1Plan = field(default_factory=Stage1Plan)
    stage2: EpochStagePlan = field(default_factory=EpochStagePlan)
    stage3: EpochStagePlan = field(default_factory=EpochStagePlan)
    batch_size: int = 16
    weight_decay: float = 0.01
    adapter_rank: int = 8
    quantize_base: bool = False
    seed: int = 0

    def enabled_stages(self) -> list:
        return [k for k, s in ((1, self.stage1), (2, self.stage2), (3, self.stage3)) if s.enabled]

    def skip(self, *stages) -> "StagePlan":
        for k in stages:
            getattr(self, f"stage{int(k)}").enabled = False
        return self

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainState:
    stage: Optional[int] = None
    step: int = 0
    loss_log: list = field(default_factory=list)  # {"stage", "step", "loss"}
    epoch_losses: list = field(default_factory=list)  # {"stage", "epoch", "loss"}
    grad_norms: list = field(default_factory=list)  # {"stage", "step", <group>: norm}
    snapshots: dict = field(default_factory=dict)  # stage -> {group: checksum}, plus "init"
    stage_seconds: dict = field(default_factory=dict)
    samples_used: dict = field(default_factory=dict)
    stages_run: list = field(default_factory=list)

    def losses(self, stage=None) -> list:
        return [r["loss"] for r in self.loss_log if stage is None or r["stage"] == stage]


def _digest(params) -> str:
    h = hashlib.sha256()
    for p in params:
        t = p.detach().cpu().contiguous()
        h.update(ctypes.string_at(t.data_ptr(), t.numel() * t.element_size()))
    return h.hexdigest()


def group_checksums(model) -> dict:
    """SHA-256 of every parameter group, including the frozen bases."""
    groups = model.parameter_groups()
    adapter_ids = {id(p) for ps in groups.values() for p in ps}
    out = {name: _digest(ps) for name, ps in groups.items()}
    out["encoder_base"] = _digest([p for p in model.encoder.parameters() if id(p) not in adapter_ids])
    out["decoder_base"] = _digest([p for p in model.decoder.parameters() if id(p) not in adapter_ids])
    return out


def _set_trainable(model, names) -> list:
    for p in model.parameters():
        p.requires_grad_(False)
        p.grad = None  # no stale gradients from the previous stage
    groups = model.parameter_groups()
    params = []
    for name in names:
        for p in groups[name]:
            p.requires_grad_(True)
            params.append(p)
    return params


def _group_norm(params) -> float:
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float(p.grad.detach().pow(2).sum())
    return total ** 0.5


def _run_epochs(model, samples, stage: int, lr: float, epochs: int, plan: StagePlan,
                state: TrainState, rng: random.Random):
    params = _set_trainable(model, STAGE_GROUPS[stage])
    if not params:
        raise TrainingError(f"stage {stage} has no trainable parameters; were adapters attached?")
    opt = torch.optim.AdamW(params, lr=lr, weight_decay=plan.weight_decay)
    groups = model.parameter_groups()
    model.train()
    order = list(range(len(samples)))
    bs = plan.batch_size
    for epoch in range(epochs):
        rng.shuffle(order)
        total, count = 0.0, 0
        for i in range(0, len(order), bs):
            batch = [samples[j] for j in order[i:i + bs]]
            opt.zero_grad(set_to_none=True)
            loss = model.sequence_loss([s.messages for s in batch], [s.label for s in batch])
            loss.backward()
            state.grad_norms.append({"stage": stage, "step": state.step,
                                     **{g: _group_norm(ps) for g, ps in groups.items()}})
            opt.step()
            value = float(loss.detach())
            state.loss_log.append({"stage": stage, "step": state.step, "loss": value})
            state.step += 1
            total += value * len(batch)
            count += len(batch)
        state.epoch_losses.append({"stage": stage, "epoch": epoch, "loss": total / max(count, 1)})
        log.info("stage %d epoch %d mean loss %.4f", stage, epoch, total / max(count, 1))
    for p in model.parameters():
        p.requires_grad_(False)


def stage1_sample(dataset, cap: int, balance: float, rng: random.Random) -> list:
    """Class-balanced draw of at most ``cap`` sequences (``balance`` = anomalous share)."""
    anom = [s for s in dataset if s.label == ANOMALOUS]
    norm = [s for s in dataset if s.label == NORMAL]
    size = min(cap, len(dataset))
    want_anom = min(len(anom), int(round(balance * size)))
    want_norm = min(len(norm), size - want_anom)
    # Top up from the other class if one side ran short.
    want_anom = min(len(anom), size - want_norm)
    picked = rng.sample(anom, want_anom) + rng.sample(norm, want_norm)
    rng.shuffle(picked)
    return picked


def _begin(model, state: TrainState, stage: int):
    state.stage = stage
    if "init" not in state.snapshots:
        state.snapshots["init"] = group_checksums(model)


def _end(model, state: TrainState, stage: int, started: float):
    state.snapshots[stage] = group_checksums(model)
    state.stage_seconds[stage] = time.process_time() - started
    state.stages_run.append(stage)


def run_stage1(dataset, plan: StagePlan, model, state: Optional[TrainState] = None,
               rng: Optional[random.Random] = None) -> TrainState:
    state = state or TrainState()
    rng = rng or random.Random(plan.seed)
    if len(dataset) < 2:
        raise TrainingError("stage 1 needs at least 2 training sequences")
    started = time.process_time()
    _begin(model, state, 1)
    sample = stage1_sample(dataset, plan.stage1.sample_cap, plan.stage1.balance, rng)
    state.samples_used[1] = len(sample)
    _run_epochs(model, sample, 1, plan.stage1.lr, plan.stage1.epochs, plan, state, rng)
    _end(model, state, 1, started)
    return state


def run_stage2(dataset, plan: StagePlan, model, state: Optional[TrainState] = None,
               rng: Optional[random.Random] = None) -> TrainState:
    state = state or TrainState()
    rng = rng or random.Random(plan.seed)
    started = time.process_time()
    _begin(model, state, 2)
    state.samples_used[2] = len(dataset)
    _run_epochs(model, list(dataset), 2, plan.stage2.lr, plan.stage2.epochs, plan, state, rng)
    _end(model, state, 2, started)
    return state


def run_stage3(dataset, plan: StagePlan, model, state: Optional[TrainState] = None,
               rng: Optional[random.Random] = None) -> TrainState:
    state = state or TrainState()
    rng = rng or random.Random(plan.seed)
    started = time.process_time()
    _begin(model, state, 3)
    state.samples_used[3] = len(dataset)
    _run_epochs(model, list(dataset), 3, plan.stage3.lr, plan.stage3.epochs, plan, state, rng)
    _end(model, state, 3, started)
    return state


_RUNNERS = {1: run_stage1, 2: run_stage2, 3: run_stage3}


def run_training(dataset, plan: StagePlan, model,
                 on_stage_end: Optional[Callable] = None) -> TrainState:
    """Run the enabled stages in order 1, 2, 3.

    ``on_stage_end(stage, model, state)`` is called at each stage boundary
    (before the next stage starts), e.g. to write a checkpoint.
    """
    stages = plan.enabled_stages()
    if not stages:
        raise TrainingError("every training stage is disabled")
    if not getattr(model, "adapters_attached", False):
        model.attach_adapters(plan.adapter_rank)
    torch.manual_seed(plan.seed)
    rng = random.Random(plan.seed)
    state = TrainState()
    for k in stages:
        _RUNNERS[k](dataset, plan, model, state, rng)
        if on_stage_end is not None:
            on_stage_end(k, model, state)
    return state
