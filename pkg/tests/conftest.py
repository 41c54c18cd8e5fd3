import random

import pytest
import torch

from logprompt.grouping import LogSequence
from logprompt.ingest import ANOMALOUS, NORMAL, LogRecord
from logprompt.model import DecoderConfig, EncoderConfig, ModelConfig, build_tiny_model

WORDS = ["disk", "error", "node", "ok", "link", "up", "down", "job", "done", "<*>", "kernel", "panic"]


def make_records(labels, contents=None, keys=None):
    out = []
    for i, lab in enumerate(labels):
        content = contents[i] if contents else f"message {i}"
        out.append(LogRecord(index=i, content=content, line_no=i, session_key=keys[i] if keys else None,
                             message_label=lab))
    return out


def random_messages(rng, n):
    return [" ".join(rng.choice(WORDS) for _ in range(rng.randint(2, 6))) for _ in range(n)]


def make_sequences(n, anomaly_every=5, length=4, seed=0):
    rng = random.Random(seed)
    seqs = []
    for i in range(n):
        lab = ANOMALOUS if i % anomaly_every == 0 else NORMAL
        msgs = random_messages(rng, length)
        if lab == ANOMALOUS:
            msgs[rng.randrange(length)] = "kernel panic"
        seqs.append(LogSequence(f"s{i}", msgs, lab, i))
    return seqs


def tiny_config(d_enc=16, d_dec=32, layers=1, heads=2, max_positions=128, rank=2):
    return ModelConfig(
        encoder=EncoderConfig(d_enc=d_enc, layers=layers, heads=heads, max_message_tokens=32, vocab_size=256),
        decoder=DecoderConfig(d_dec=d_dec, layers=layers, heads=heads, max_positions=max_positions,
                              vocab_size=256),
        adapter_rank=rank,
        adapter_alpha=2.0 * rank,
    )


@pytest.fixture
def small_model():
    torch.manual_seed(0)
    return build_tiny_model(WORDS, tiny_config(), seed=0)


ZERO_GRAD = 1e-8


def finite_difference_error(model, loss_fn, params, eps=1e-6, max_coords=48, seed=0):
    """Relative error ||g - g_fd|| / ||g_fd|| per named parameter (central differences).

    Tensors whose analytic and numeric gradients both vanish (e.g. attention key
    biases, which shift every score equally) get error 0.
    """
    for p in model.parameters():
        p.requires_grad_(False)
    rng = random.Random(seed)
    errors = {}
    for name, p in params:
        p.requires_grad_(True)
        model.zero_grad()
        loss_fn().backward()
        analytic = p.grad.detach().clone().flatten()
        p.requires_grad_(False)
        p.grad = None
        idx = list(range(p.numel()))
        if len(idx) > max_coords:
            idx = rng.sample(idx, max_coords)
        fd = torch.zeros(len(idx), dtype=torch.float64)
        flat = p.data.view(-1)
        with torch.no_grad():
            for j, i in enumerate(idx):
                old = flat[i].item()
                flat[i] = old + eps
                up = loss_fn().item()
                flat[i] = old - eps
                down = loss_fn().item()
                flat[i] = old
                fd[j] = (up - down) / (2 * eps)
        a = analytic[idx]
        if max(a.norm().item(), fd.norm().item()) < ZERO_GRAD:
            errors[name] = 0.0
        else:
            errors[name] = ((a - fd).norm() / fd.norm()).item()
    return errors


def gradcheck_model():
    """float64 tiny model at d_enc=8, d_dec=16 and a two-message sequence."""
    cfg = tiny_config(d_enc=8, d_dec=16, layers=1, heads=2, max_positions=64)
    m = build_tiny_model(WORDS, cfg, seed=0).double().eval()
    msgs = [["disk error node", "kernel panic"]]
    params = [("projector.weight", m.projector.weight), ("projector.bias", m.projector.bias)]
    params += [(f"encoder.{n}", p) for n, p in m.encoder.named_parameters()]
    return m, (lambda: m.sequence_loss(msgs, [ANOMALOUS])), params
