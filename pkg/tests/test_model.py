import math
import random

import pytest
import torch

from conftest import WORDS, finite_difference_error, gradcheck_model, random_messages, tiny_config
from logprompt.ingest import ANOMALOUS, NORMAL
from logprompt.model import (ANSWER_TEXT, AdapterError, CheckpointError, LoRALinear, ModelConfig, ModelError,
                             UNDECIDED, attach_adapters, build_tiny_model, load_checkpoint, parse_verdict,
                             save_checkpoint)
from logprompt.model.lora import expected_adapter_count
from logprompt.model.tokenizer import WordTokenizer


@pytest.fixture(scope="module")
def default_model():
    """Tiny backbone at the default widths (d_enc=64, d_dec=128)."""
    return build_tiny_model(WORDS, ModelConfig(), seed=0).eval()


# -- tokenizer ---------------------------------------------------------------


def test_word_tokenizer_round_trip(tmp_path):
    tok = WordTokenizer.build(["node <*> is down.", "job done"], specials=("[PAD]", "[UNK]"))
    ids = tok.encode("job <*> is down.")
    assert tok.decode(ids) == "job <*> is down."
    assert tok.encode("zebra") == [tok.token_id("[UNK]")]
    tok.save(tmp_path / "v.json")
    assert WordTokenizer.load(tmp_path / "v.json").itos == tok.itos


# -- encoder / projector / assembly -------------------------------------------


def test_encoder_shape_and_range(default_model):
    C = default_model.encode_messages(random_messages(random.Random(0), 5))
    assert C.shape == (5, 64)
    assert C.abs().max() <= 1.0


def test_encoder_is_per_message(default_model):
    msgs = random_messages(random.Random(1), 6)
    C = default_model.encode_messages(msgs)
    perm = [3, 0, 5, 1, 4, 2]
    Cp = default_model.encode_messages([msgs[i] for i in perm])
    assert torch.allclose(Cp, C[perm], atol=1e-6)


def test_encode_batch_dedupes_consistently(default_model):
    a, b = ["disk error", "node up"], ["node up", "job done", "disk error"]
    Ca, Cb = default_model.encode_batch([a, b])
    assert torch.allclose(Ca[0], Cb[2], atol=1e-6)
    assert torch.allclose(Cb, default_model.encode_messages(b), atol=1e-6)


def test_encoder_errors(default_model):
    with pytest.raises(ModelError):
        default_model.encode_messages([])
    with pytest.raises(ModelError, match=str(default_model.max_messages)):
        default_model.encode_messages(["x"] * (default_model.max_messages + 1))


def test_projector(default_model):
    with torch.no_grad():
        E = default_model.project(torch.zeros(5, 64))
        assert E.shape == (5, 128)
        bias = default_model.projector.bias.clone()
        default_model.projector.bias.zero_()
        assert torch.equal(default_model.project(torch.zeros(3, 64)), torch.zeros(3, 128))
        default_model.projector.bias.copy_(bias)
        x, y = torch.randn(2, 64), torch.randn(2, 64)
        lin = default_model.project(x + y) - bias
        assert torch.allclose(lin, (default_model.project(x) - bias) + (default_model.project(y) - bias), atol=1e-5)
    with pytest.raises(ModelError, match="width"):
        default_model.project(torch.zeros(2, 63))


def test_assembly_rows_and_template_constancy(default_model):
    m = default_model
    with torch.no_grad():
        a1, a2 = m.assemble_batch([random_messages(random.Random(2), 10), random_messages(random.Random(3), 10)])
    assert a1.rows == m.A + 10 + m.Q and a1.matrix.shape[1] == 128
    assert torch.equal(a1.matrix[:m.A], a2.matrix[:m.A])
    assert torch.equal(a1.matrix[-m.Q:], a2.matrix[-m.Q:])
    assert not torch.equal(a1.matrix[m.A:m.A + 10], a2.matrix[m.A:m.A + 10])


def test_assembly_position_budget(default_model):
    m = default_model
    n = m.decoder.max_positions - m.A - m.Q + 1
    with pytest.raises(ModelError, match=f"N={n}"):
        m.assemble_prompt(torch.zeros(n, 128))
    with pytest.raises(ModelError):
        m.assemble_prompt(torch.zeros(0, 128))


def test_long_sequences_keep_most_recent(default_model):
    msgs = [f"job {i}" for i in range(default_model.max_messages + 5)]
    assert default_model.fit_messages(msgs) == msgs[5:]


# -- verdicts -----------------------------------------------------------------


@pytest.mark.parametrize("text,label", [
    ("The sequence is anomalous.", ANOMALOUS),
    ("The sequence is normal.", NORMAL),
    ("banana", UNDECIDED),
    ("", UNDECIDED),
])
def test_parse_verdict(text, label):
    v = parse_verdict(text)
    assert v.label == label and v.raw_text == text
    assert v.predicted == (ANOMALOUS if label == ANOMALOUS else NORMAL)


# -- loss ---------------------------------------------------------------------


def _fake_decoder(model, monkeypatch, make_logits):
    def forward(inputs_embeds, attention_mask, last=None):
        return make_logits(inputs_embeds.shape[0], last)
    monkeypatch.setattr(model.decoder, "forward", forward)


def test_loss_zero_for_one_hot_target(small_model, monkeypatch):
    m = small_model
    target = m.answer_ids[ANOMALOUS]
    V = m.decoder.vocab_size

    def logits(b, k):
        out = torch.full((b, k, V), float("-inf"))
        for j, t in enumerate(target):
            out[:, k - len(target) + j, t] = 0.0
        return out

    with torch.no_grad():
        asm = m.assemble_batch([["disk error"]])
    _fake_decoder(m, monkeypatch, logits)
    assert m.answer_loss(asm, [ANOMALOUS]).item() == 0.0


def test_loss_ln_vocab_for_uniform_output(small_model, monkeypatch):
    m = small_model
    V = m.decoder.vocab_size
    with torch.no_grad():
        asm = m.assemble_batch([["disk error"], ["node up", "job done"]])
    _fake_decoder(m, monkeypatch, lambda b, k: torch.zeros(b, k, V))
    loss = m.answer_loss(asm, [ANOMALOUS, NORMAL])
    assert loss.item() == pytest.approx(math.log(V), rel=1e-6)


def test_loss_counts_answer_tokens_only(small_model):
    m = small_model
    logits, targets = m.answer_logits(m.assemble_batch([["disk error"], ["x"]]), [ANOMALOUS, NORMAL])
    assert len(targets) == len(m.answer_ids[ANOMALOUS]) + len(m.answer_ids[NORMAL])
    assert logits.shape == (len(targets), m.decoder.vocab_size)


def test_left_padding_does_not_change_per_sample_logits(small_model):
    m = small_model.eval()
    short, long_ = ["disk error"], ["node up", "job done", "link down", "kernel panic"]
    with torch.no_grad():
        both, _ = m.answer_logits(m.assemble_batch([short, long_]), [NORMAL, NORMAL])
        alone, _ = m.answer_logits(m.assemble_batch([short]), [NORMAL])
    assert torch.allclose(both[:alone.shape[0]], alone, atol=1e-5)


def test_batched_and_single_generation_agree(small_model):
    m = small_model
    batch = [["disk error"], ["node up", "job done", "link down"]]
    joint = m.predict(batch)
    single = [m.predict([b])[0] for b in batch]
    assert [v.raw_text for v in joint] == [v.raw_text for v in single]


def test_gradients_match_finite_differences():
    model, loss_fn, params = gradcheck_model()
    wanted = {"projector.weight", "projector.bias", "encoder.model.tok.weight", "encoder.model.pooler.weight",
              "encoder.model.blocks.0.attn.q.weight"}
    errors = finite_difference_error(model, loss_fn, [(n, p) for n, p in params if n in wanted])
    assert set(errors) == wanted
    assert max(errors.values()) < 1e-3, errors


# -- adapters -----------------------------------------------------------------


def test_adapter_count_and_identity(small_model):
    m = small_model
    x = [["disk error"], ["node up", "kernel panic"]]
    with torch.no_grad():
        before = torch.stack([a.matrix for a in m.assemble_batch(x[:1])])
        logits_before, _ = m.answer_logits(m.assemble_batch(x), [NORMAL, ANOMALOUS])
    linear_shapes = []
    for mod in (m.encoder, m.decoder):
        for name, lin in mod.named_modules():
            if isinstance(lin, torch.nn.Linear) and name.split(".")[-1] in mod.adapter_targets:
                linear_shapes.append((lin.in_features, lin.out_features))
    m.attach_adapters(rank=2)
    groups = m.parameter_groups()
    count = sum(p.numel() for g in ("encoder_adapters", "decoder_adapters") for p in groups[g])
    assert count == expected_adapter_count(linear_shapes, 2)
    with torch.no_grad():
        after = torch.stack([a.matrix for a in m.assemble_batch(x[:1])])
        logits_after, _ = m.answer_logits(m.assemble_batch(x), [NORMAL, ANOMALOUS])
    assert torch.equal(before, after)
    assert torch.allclose(logits_before, logits_after, atol=1e-6)


def test_adapter_rank_errors():
    with pytest.raises(AdapterError):
        LoRALinear(torch.nn.Linear(8, 8), 0)
    with pytest.raises(AdapterError):
        LoRALinear(torch.nn.Linear(8, 16), 8)
    net = torch.nn.Sequential()
    net.add_module("q", torch.nn.Linear(4, 4))
    with pytest.raises(AdapterError):
        attach_adapters(net, 4, ["q"])
    assert isinstance(net.q, torch.nn.Linear)  # nothing mutated on failure


def test_lora_scale_and_freeze():
    base = torch.nn.Linear(6, 5)
    lora = LoRALinear(base, 2, alpha=8)
    assert lora.scale == 4.0
    assert not base.weight.requires_grad
    with torch.no_grad():
        lora.lora_B.fill_(0.1)
    x = torch.randn(3, 6)
    expect = base(x) + 4.0 * (x @ lora.lora_A.t() @ lora.lora_B.t())
    assert torch.allclose(lora(x), expect)


# -- construction / checkpoints ----------------------------------------------


def test_same_seed_same_weights():
    a = build_tiny_model(WORDS, tiny_config(), seed=7)
    b = build_tiny_model(WORDS, tiny_config(), seed=7)
    for (n, p), (_, q) in zip(a.state_dict().items(), b.state_dict().items()):
        assert torch.equal(p, q), n


def test_checkpoint_round_trip(small_model, tmp_path):
    m = small_model.attach_adapters(2)
    with torch.no_grad():
        for p in m.parameter_groups()["decoder_adapters"]:
            p.add_(0.01 * torch.randn_like(p))
    save_checkpoint(m, tmp_path / "ck")
    loaded = load_checkpoint(tmp_path / "ck", m.cfg)
    batch = [["disk error"], ["node up", "kernel panic"]]
    with torch.no_grad():
        la, _ = m.eval().answer_logits(m.assemble_batch(batch), [NORMAL, NORMAL])
        lb, _ = loaded.answer_logits(loaded.assemble_batch(batch), [NORMAL, NORMAL])
    assert torch.equal(la, lb)


def test_checkpoint_mismatch(small_model, tmp_path):
    save_checkpoint(small_model, tmp_path / "ck")
    other = tiny_config(d_dec=48)
    with pytest.raises(CheckpointError, match="d_dec"):
        load_checkpoint(tmp_path / "ck", other)
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "nothing")


def test_answer_templates_tokenize_exactly(small_model):
    tok = small_model.decoder.tokenizer
    for text in ANSWER_TEXT.values():
        assert tok.decode(tok.encode(text)) == text
