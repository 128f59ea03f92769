import numpy as np
import pytest
import torch

from addrtag.embeddings import (
    EMBEDDING_DIM,
    BpeCombinedProvider,
    BytePairSegmenter,
    FallbackProvider,
    SubwordCombiner,
    WordSubwordProvider,
    char_ngrams,
    combine_subwords,
    default_segmenter,
    fnv1a_32,
    learn_merges,
    load_pretrained_vectors,
    make_provider,
    read_binary_vectors,
    read_text_vectors,
    write_binary_vectors,
    write_text_vectors,
)
from addrtag.errors import BadFormat, DimensionMismatch, EmptyInput, ProviderUnavailable


@pytest.mark.parametrize(
    "text, expected",
    # published FNV-1a 32-bit test vectors
    [("", 0x811C9DC5), ("a", 0xE40C292C), ("foobar", 0xBF9CF968)],
)
def test_fnv1a_vectors(text, expected):
    assert fnv1a_32(text) == expected


def test_char_ngrams():
    grams = char_ngrams("ab")
    assert grams == ["<ab", "ab>", "<ab>"]
    assert all(3 <= len(g) for g in char_ngrams("Baker"))


def test_fallback_is_deterministic_and_finite():
    a, b = FallbackProvider(), FallbackProvider()
    for tok in ["221", "NW16XE", "Strasse", "ул."]:
        v = a.embed_word(tok)
        assert v.shape == (EMBEDDING_DIM,) and np.isfinite(v).all()
        assert np.array_equal(v, b.embed_word(tok))
    assert not np.array_equal(a.embed_word("London"), a.embed_word("Londres"))
    with pytest.raises(EmptyInput):
        a.embed_word("")
    with pytest.raises(EmptyInput):
        a.embed_sequence([])


def test_embed_batch_zero_padding():
    p = FallbackProvider()
    x = p.embed_batch([("a1", "b2", ""), ("c3", "", "")], [2, 1])
    assert x.shape == (2, 3, EMBEDDING_DIM)
    assert torch.count_nonzero(x[0, 2]) == 0 and torch.count_nonzero(x[1, 1:]) == 0
    assert np.allclose(x[1, 0].numpy(), p.embed_word("c3"))


def test_word_subword_oov(tmp_path):
    words = ["London", "Baker"]
    vecs = np.random.default_rng(0).standard_normal((2, EMBEDDING_DIM)).astype(np.float32)
    p = WordSubwordProvider(words, vecs)
    assert np.array_equal(p.embed_word("Baker"), vecs[1])
    oov = p.embed_word("NW16XE")
    assert oov.shape == (EMBEDDING_DIM,) and np.isfinite(oov).all()
    with pytest.raises(ProviderUnavailable):
        WordSubwordProvider().embed_word("x")
    with pytest.raises(ProviderUnavailable):
        make_provider("word_subword")


@pytest.mark.parametrize("suffix", [".vec", ".bin"])
def test_vector_file_roundtrip(tmp_path, suffix):
    words = ["a", "Straße", "NW1"]
    vecs = np.random.default_rng(1).standard_normal((3, EMBEDDING_DIM)).astype(np.float32)
    path = tmp_path / f"v{suffix}"
    (write_binary_vectors if suffix == ".bin" else write_text_vectors)(path, words, vecs)
    got_words, got = (read_binary_vectors if suffix == ".bin" else read_text_vectors)(path)
    assert got_words == words and np.array_equal(got, vecs)
    p = load_pretrained_vectors(path, "word_subword")
    assert np.array_equal(p.embed_word("NW1"), vecs[2])


def test_vector_file_errors(tmp_path):
    small = tmp_path / "small.vec"
    write_text_vectors(small, ["a"], np.zeros((1, 50)))
    with pytest.raises(DimensionMismatch):
        load_pretrained_vectors(small, "word_subword")
    trunc = tmp_path / "t.vec"
    write_text_vectors(trunc, ["a", "b"], np.zeros((2, EMBEDDING_DIM)))
    trunc.write_text("\n".join(trunc.read_text().splitlines()[:2]) + "\n")
    with pytest.raises(BadFormat):
        load_pretrained_vectors(trunc, "word_subword")
    binf = tmp_path / "t.bin"
    write_binary_vectors(binf, ["a"], np.zeros((1, EMBEDDING_DIM)))
    binf.write_bytes(binf.read_bytes()[:-100])
    with pytest.raises(BadFormat):
        load_pretrained_vectors(binf, "bpe_combined")


# -- byte pairs ----------------------------------------------------------------


def test_learn_merges_prefers_frequent_pairs():
    merges = learn_merges({"low": 5, "lower": 2, "newest": 6, "widest": 3}, 3)
    assert merges[0] in {("e", "s"), ("s", "t")}
    assert len(merges) == 3


def test_segmenter_roundtrip():
    seg = default_segmenter()
    for tok in ["Baker", "Bahnhofstrasse", "NW16XE", "x"]:
        units = seg.segment(tok)
        assert "".join(units).replace("▁", "") == tok
        assert units[0].startswith("▁")
    assert len(seg.segment("Street")) < len("Street")
    text = "\n".join(f"{a} {b}" for a, b in seg.merges[:5])
    assert BytePairSegmenter.from_text(text).merges == seg.merges[:5]


def test_combiner_zero_params():
    c = SubwordCombiner(8, 8)
    with torch.no_grad():
        for p in c.parameters():
            p.zero_()
    out = combine_subwords(c, np.random.default_rng(0).standard_normal((3, 8)).astype(np.float32))
    assert torch.count_nonzero(out) == 0


def test_combiner_shape_and_errors():
    c = SubwordCombiner()
    out = combine_subwords(c, np.ones((3, EMBEDDING_DIM), dtype=np.float32))
    assert out.shape == (EMBEDDING_DIM,)
    with pytest.raises(EmptyInput):
        combine_subwords(c, np.ones((0, EMBEDDING_DIM), dtype=np.float32))


def test_bpe_provider_batch_matches_words_and_is_differentiable():
    p = BpeCombinedProvider()
    x = p.embed_batch([("Baker", "Street"), ("Baker", "")], [2, 1])
    assert np.allclose(x[0, 0].detach().numpy(), p.embed_word("Baker"), atol=1e-6)
    assert np.allclose(x[1, 0].detach().numpy(), x[0, 0].detach().numpy())
    assert torch.count_nonzero(x[1, 1]) == 0
    x.sum().backward()
    assert p.combiner.proj.weight.grad is not None


def test_combiner_gradient_fd():
    torch.manual_seed(0)
    c = SubwordCombiner(4, 3).double()
    units = torch.randn(2, 3, 4, dtype=torch.float64)
    lengths = torch.tensor([3, 2])
    params = tuple(c.parameters())

    def f(*ps):
        return torch.func.functional_call(c, {n: p for (n, _), p in zip(c.named_parameters(), ps)}, (units, lengths)).sum()

    assert torch.autograd.gradcheck(f, tuple(p.detach().clone().requires_grad_() for p in params), eps=1e-6, atol=1e-6)
