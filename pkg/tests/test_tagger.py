import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from addrtag import synthetic
from addrtag.core import DEFAULT_VOCAB, AddressSample, Tag
from addrtag.data import collate, make_batches
from addrtag.embeddings import FallbackProvider
from addrtag.errors import EmptyInput, MissingGold
from addrtag.tagger import (
    AddressTagger,
    EncoderOutputs,
    ModelConfig,
    attention_weights,
    context_vector,
    forward,
    greedy_parse,
    masked_softmax,
    predict_batch,
)


def tiny(variant="attention", adversarial=False, seed=0, dtype=torch.float64, **kw):
    cfg = ModelConfig(variant=variant, adversarial=adversarial, input_dim=5, hidden_dim=4, tag_dim=3, **kw)
    m = AddressTagger(cfg, seed)
    return m.to(dtype)


@pytest.mark.parametrize("variant", ["base", "attention"])
@pytest.mark.parametrize("n", [1, 3, 17])
def test_forced_length(variant, n):
    m = tiny(variant)
    logits = forward(m, torch.randn(n, 5, dtype=torch.float64))
    assert logits.shape == (n, 8)


def test_config_validation():
    assert ModelConfig(variant="plain").variant == "base"
    with pytest.raises(ValueError):
        ModelConfig(variant="transformer")
    with pytest.raises(ValueError):
        ModelConfig(tag_repr="one_hot", tag_dim=32)
    m = AddressTagger(ModelConfig(tag_repr="one_hot", tag_dim=10, hidden_dim=4, input_dim=5))
    assert torch.equal(m.tag_embedding.weight, torch.eye(10))


def test_zero_params_zero_encoder_outputs():
    m = tiny("base")
    with torch.no_grad():
        for p in m.encoder.parameters():
            p.zero_()
    enc = m.encode(torch.zeros(1, 4, 5, dtype=torch.float64))
    assert torch.count_nonzero(enc.outputs) == 0 and torch.count_nonzero(enc.h) == 0


def test_softmax_two_scores():
    alpha = masked_softmax(torch.tensor([[math.log(2), 0.0]], dtype=torch.float64), None)
    assert torch.allclose(alpha, torch.tensor([[2 / 3, 1 / 3]], dtype=torch.float64), atol=1e-15)


def test_context_vector_oracle(rng):
    alpha = torch.from_numpy(rng.dirichlet(np.ones(6), size=3))
    outputs = torch.from_numpy(rng.standard_normal((3, 6, 4)))
    got = context_vector(alpha, outputs).numpy()
    for b in range(3):
        want = [sum(alpha[b, k].item() * outputs[b, k, d].item() for k in range(6)) for d in range(4)]
        assert np.allclose(got[b], want, atol=1e-10, rtol=0)


def _enc(outputs, lengths):
    mask = torch.arange(outputs.shape[1])[None, :] < torch.as_tensor(lengths)[:, None]
    state = torch.zeros(outputs.shape[0], outputs.shape[2], dtype=outputs.dtype)
    return EncoderOutputs(outputs, state, state, mask)


def test_attention_mask_matches_unpadded_slice(rng):
    m = tiny()
    outputs = torch.from_numpy(rng.standard_normal((2, 6, 4)))
    h_prev = torch.from_numpy(rng.standard_normal((2, 4)))
    alpha = attention_weights(m.attention, h_prev, _enc(outputs, [6, 3]))
    assert torch.all(alpha[1, 3:] == 0)
    sliced = attention_weights(m.attention, h_prev[1:], _enc(outputs[1:, :3], [3]))
    assert torch.allclose(alpha[1, :3], sliced[0], atol=1e-12)
    with pytest.raises(EmptyInput):
        attention_weights(m.attention, h_prev, _enc(outputs[:, :0], [0, 0]))


@settings(max_examples=50, deadline=None)
@given(n=st.integers(1, 12), seed=st.integers(0, 10_000))
def test_attention_permutation_equivariance(n, seed):
    g = np.random.default_rng(seed)
    m = tiny(seed=seed % 7)
    outputs = torch.from_numpy(g.standard_normal((1, n, 4)))
    h_prev = torch.from_numpy(g.standard_normal((1, 4)))
    perm = torch.from_numpy(g.permutation(n))
    a = attention_weights(m.attention, h_prev, _enc(outputs, [n]))
    b = attention_weights(m.attention, h_prev, _enc(outputs[:, perm], [n]))
    assert torch.allclose(a[:, perm], b, atol=1e-12)
    assert abs(a.sum().item() - 1) < 1e-12


def _manual_decode(m, enc, inputs):
    """Step the decoder by hand with the given previous-tag inputs."""
    state, rows = (enc.h, enc.c), []
    for last in inputs:
        last = torch.tensor([last])
        if m.attention is None:
            logit, state = m.decode_step_plain(state, last)
        else:
            logit, state, _ = m.decode_step_attention(state, last, enc)
        rows.append(logit[0])
    return torch.stack(rows)


@pytest.mark.parametrize("variant", ["base", "attention"])
def test_teacher_forcing_feeds_bos_then_gold(variant):
    m = tiny(variant, seed=3)
    x = torch.randn(1, 3, 5, dtype=torch.float64)
    enc = m.encode(x)
    gold = [Tag.StreetNumber, Tag.StreetNumber, Tag.PostalCode]
    tf = m.decode(enc, torch.tensor([gold]), teacher_forcing=True)[0]
    manual = _manual_decode(m, enc, [DEFAULT_VOCAB.bos_index, int(gold[0]), int(gold[1])])
    assert torch.allclose(tf, manual, atol=0, rtol=0)
    with pytest.raises(MissingGold):
        m.decode(enc, None, teacher_forcing=True)
    with pytest.raises(MissingGold):
        m.decode(enc, torch.tensor([gold[:2]]), teacher_forcing=True)


def test_greedy_feeds_own_predictions():
    m = tiny("attention", seed=4)
    enc = m.encode(torch.randn(1, 4, 5, dtype=torch.float64))
    greedy = m.decode(enc)[0]
    prev = [DEFAULT_VOCAB.bos_index] + greedy.argmax(-1).tolist()[:-1]
    assert torch.equal(greedy, _manual_decode(m, enc, prev))


def test_tie_breaks_to_lowest_index():
    m = AddressTagger(ModelConfig(hidden_dim=4))
    with torch.no_grad():
        m.output.weight.zero_()
        m.output.bias.zero_()
    assert greedy_parse(m, FallbackProvider(), ["a", "b", "c", "d", "e"]) == [Tag.StreetNumber] * 5


@pytest.mark.parametrize("variant", ["base", "attention"])
def test_logit_shift_invariance(variant):
    p = FallbackProvider()
    m = AddressTagger(ModelConfig(variant=variant, hidden_dim=8), seed=2)
    tokens = "221 B Baker Street London".split()
    before = greedy_parse(m, p, tokens)
    with torch.no_grad():
        m.output.bias += 7.5
    assert greedy_parse(m, p, tokens) == before
    with pytest.raises(EmptyInput):
        greedy_parse(m, p, [])


@pytest.mark.parametrize("variant", ["base", "attention"])
def test_loss_gradients_match_finite_differences(variant):
    m = tiny(variant, seed=5)
    x = torch.randn(2, 4, 5, dtype=torch.float64)
    lengths = torch.tensor([4, 2])
    gold = torch.tensor([[0, 2, 1, 1], [5, 3, 9, 9]])
    mask = gold != DEFAULT_VOCAB.pad_index
    names = [n for n, _ in m.named_parameters() if n.startswith(("attention.", "output."))]
    assert names
    base = dict(m.named_parameters())

    def loss_fn(*ps):
        params = {**base, **dict(zip(names, ps))}
        logits = torch.func.functional_call(m, params, (x, lengths), {"gold": gold.clamp(max=7), "teacher_forcing": True})
        return m.loss(logits, gold, mask)

    inputs = tuple(base[n].detach().clone().requires_grad_() for n in names)
    assert torch.autograd.gradcheck(loss_fn, inputs, eps=1e-6, atol=1e-8, rtol=1e-4)


def test_padding_does_not_change_predictions():
    p = FallbackProvider()
    m = AddressTagger(ModelConfig(variant="attention", hidden_dim=8), seed=1)
    samples = synthetic.generate("A", 3, 0) + synthetic.generate("B", 2, 1)
    together = predict_batch(m, p, collate(samples))
    alone = [predict_batch(m, p, collate([s]))[0] for s in samples]
    assert together == alone


def test_init_is_per_block():
    a = AddressTagger(ModelConfig(hidden_dim=8), seed=7)
    b = AddressTagger(ModelConfig(hidden_dim=8, adversarial=True), seed=7)
    c = AddressTagger(ModelConfig(hidden_dim=8), seed=8)
    assert torch.equal(a.encoder.weight_ih_l0, b.encoder.weight_ih_l0)
    assert not torch.equal(a.encoder.weight_ih_l0, c.encoder.weight_ih_l0)
    bound = 1 / math.sqrt(8)
    assert a.encoder.weight_hh_l0.abs().max() <= bound


def test_greedy_equals_teacher_forced_on_memorized_data():
    from addrtag.training import TrainConfig, train

    p = FallbackProvider()
    baker = AddressSample.from_names(
        ["221", "B", "Baker", "Street"], ["StreetNumber", "Unit", "StreetName", "StreetName"], "GB")
    data = [baker] + synthetic.generate("B", 1, 1)
    ckpt, log = train(TrainConfig(epochs=150, batch_size=2, lr=0.5, early_stop_patience=200), ModelConfig(variant="attention", hidden_dim=16), p, data, data, seed=5)
    m = ckpt.build_model()
    batch = collate(data)
    x, lengths = m.embed_batch(p, batch)
    gold = torch.as_tensor(batch.tag_matrix)
    with torch.no_grad():
        tf = m(x, lengths, gold=gold.clamp(max=7), teacher_forcing=True)
        greedy = m(x, lengths)
    assert [list(map(int, r[:n])) for r, n in zip(greedy.argmax(-1), batch.lengths)] == [
        list(map(int, s.tags)) for s in data
    ]
    assert greedy_parse(m, p, ["221", "B", "Baker", "Street"]) == [
        Tag.StreetNumber, Tag.Unit, Tag.StreetName, Tag.StreetName]
    valid = torch.as_tensor(batch.mask)
    assert torch.allclose(tf[valid], greedy[valid], atol=1e-6)
