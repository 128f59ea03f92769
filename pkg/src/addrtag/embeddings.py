"""Token embedding providers (all 300-dimensional).

Three kinds are available:

``word_subword``
    A fixed word table read from a vector file. Out-of-vocabulary tokens are
    composed from hashed character n-gram buckets, so every token gets a vector.
``bpe_combined``
    Tokens are split into byte-pair units; the unit vectors are merged into one
    word vector by a trainable bidirectional LSTM plus a linear projection.
``fallback``
    Offline, deterministic: the average of hashed character n-gram bucket
    vectors drawn from a constant-seeded generator. No files needed.
"""

from __future__ import annotations

import functools
import math
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
from torch import nn
from torch.nn.utils.rnn import pack_padded_sequence, pad_sequence

from .errors import BadFormat, DimensionMismatch, EmptyInput, ProviderUnavailable

EMBEDDING_DIM = 300
NGRAM_MIN, NGRAM_MAX = 3, 6
NUM_BUCKETS = 2_000_000
FALLBACK_SEED = 20_210_917
UNIT_SEED = FALLBACK_SEED + 1
WORD_START = "▁"

KINDS = ("word_subword", "bpe_combined", "fallback")


def fnv1a_32(text: str) -> int:
    h = 2166136261
    for byte in text.encode("utf-8"):
        h ^= byte
        h = (h * 16777619) & 0xFFFFFFFF
    return h


def char_ngrams(token: str, n_min: int = NGRAM_MIN, n_max: int = NGRAM_MAX) -> list[str]:
    """Character n-grams of ``<token>``, plus the bracketed token itself."""
    word = f"<{token}>"
    grams = [
        word[i : i + n]
        for n in range(n_min, n_max + 1)
        for i in range(len(word) - n + 1)
    ]
    if word not in grams:
        grams.append(word)
    return grams


@functools.lru_cache(maxsize=200_000)
def _bucket_vector(seed: int, bucket: int, dim: int) -> np.ndarray:
    vec = np.random.default_rng([seed, bucket]).standard_normal(dim).astype(np.float32)
    vec.setflags(write=False)
    return vec


def hashed_ngram_vector(token: str, seed: int = FALLBACK_SEED, dim: int = EMBEDDING_DIM) -> np.ndarray:
    grams = char_ngrams(token)
    acc = np.zeros(dim, dtype=np.float64)
    for g in grams:
        acc += _bucket_vector(seed, fnv1a_32(g) % NUM_BUCKETS, dim)
    return (acc / len(grams)).astype(np.float32)


# ---------------------------------------------------------------------------
# byte-pair segmentation


def learn_merges(word_counts: dict[str, int], num_merges: int) -> list[tuple[str, str]]:
    """Learn a byte-pair merge table from word frequencies."""
    vocab = {
        tuple([WORD_START + w[0], *w[1:]]): c for w, c in word_counts.items() if w
    }
    merges: list[tuple[str, str]] = []
    for _ in range(num_merges):
        pairs: dict[tuple[str, str], int] = {}
        for symbols, count in vocab.items():
            for pair in zip(symbols, symbols[1:]):
                pairs[pair] = pairs.get(pair, 0) + count
        if not pairs:
            break
        best = min(pairs, key=lambda p: (-pairs[p], p))
        merges.append(best)
        vocab = {_merge_pair(symbols, best): c for symbols, c in vocab.items()}
    return merges


def _merge_pair(symbols: tuple[str, ...], pair: tuple[str, str]) -> tuple[str, ...]:
    out = []
    i = 0
    while i < len(symbols):
        if i + 1 < len(symbols) and (symbols[i], symbols[i + 1]) == pair:
            out.append(symbols[i] + symbols[i + 1])
            i += 2
        else:
            out.append(symbols[i])
            i += 1
    return tuple(out)


class BytePairSegmenter:
    def __init__(self, merges: Sequence[tuple[str, str]]):
        self.merges = [tuple(pair) for pair in merges]
        self.ranks = {pair: i for i, pair in enumerate(self.merges)}
        self._segment = functools.lru_cache(maxsize=100_000)(self._segment_uncached)

    @classmethod
    def bundled(cls) -> BytePairSegmenter:
        text = resources.files("addrtag.resources").joinpath("bpe_merges.txt").read_text("utf-8")
        return cls.from_text(text)

    @classmethod
    def from_text(cls, text: str) -> BytePairSegmenter:
        merges = []
        for line in text.splitlines():
            if not line or line.startswith("#"):
                continue
            a, b = line.split(" ")
            merges.append((a, b))
        return cls(merges)

    def segment(self, token: str) -> list[str]:
        return list(self._segment(token))

    def _segment_uncached(self, token: str) -> tuple[str, ...]:
        if not token:
            raise EmptyInput("cannot segment an empty token")
        symbols = (WORD_START + token[0], *token[1:])
        while len(symbols) > 1:
            ranked = [
                (self.ranks.get(pair, math.inf), pair)
                for pair in zip(symbols, symbols[1:])
            ]
            rank, pair = min(ranked)
            if rank == math.inf:
                break
            symbols = _merge_pair(symbols, pair)
        return symbols


@functools.lru_cache(maxsize=1)
def default_segmenter() -> BytePairSegmenter:
    return BytePairSegmenter.bundled()


def subword_segment(token: str, segmenter: BytePairSegmenter | None = None) -> list[str]:
    """Byte-pair units of ``token``; the first unit carries the word-start marker."""
    return (segmenter or default_segmenter()).segment(token)


# ---------------------------------------------------------------------------
# combiner


class SubwordCombiner(nn.Module):
    """Bi-LSTM over unit vectors; final forward/backward states projected back to ``hidden``."""

    def __init__(self, input_dim: int = EMBEDDING_DIM, hidden: int = EMBEDDING_DIM):
        super().__init__()
        self.input_dim = input_dim
        self.hidden = hidden
        self.lstm = nn.LSTM(input_dim, hidden, batch_first=True, bidirectional=True)
        self.proj = nn.Linear(2 * hidden, hidden)

    def forward(self, units: torch.Tensor, lengths: torch.Tensor) -> torch.Tensor:
        # units: (N, K, input_dim) padded; lengths: (N,)
        packed = pack_padded_sequence(units, lengths.cpu(), batch_first=True, enforce_sorted=False)
        _, (h_n, _) = self.lstm(packed)
        return self.proj(torch.cat([h_n[0], h_n[1]], dim=-1))


def combine_subwords(params: SubwordCombiner, unit_vectors) -> torch.Tensor:
    """Merge one word's unit vectors (k x input_dim) into a single vector."""
    units = torch.as_tensor(np.asarray(unit_vectors) if not torch.is_tensor(unit_vectors) else unit_vectors)
    if units.ndim != 2 or units.shape[0] == 0:
        raise EmptyInput("combine_subwords needs a non-empty (k, dim) array")
    if units.shape[1] != params.input_dim:
        raise ValueError(f"unit dim {units.shape[1]} != combiner input dim {params.input_dim}")
    units = units.to(next(params.parameters()).dtype)
    return params(units.unsqueeze(0), torch.tensor([units.shape[0]]))[0]


# ---------------------------------------------------------------------------
# providers


class EmbeddingProvider:
    kind: str = ""
    trainable: bool = False
    dimension: int = EMBEDDING_DIM

    def embed_word(self, token: str) -> np.ndarray:
        raise NotImplementedError

    def embed_sequence(self, tokens: Sequence[str]) -> np.ndarray:
        if len(tokens) == 0:
            raise EmptyInput("cannot embed an empty token sequence")
        return np.stack([self.embed_word(t) for t in tokens])

    def embed_batch(self, token_matrix: Sequence[Sequence[str]], lengths, dtype=torch.float32) -> torch.Tensor:
        """(B, T, dim) tensor; padded positions are zero."""
        batch, max_len = len(token_matrix), max(len(row) for row in token_matrix)
        out = np.zeros((batch, max_len, self.dimension), dtype=np.float32)
        for i, row in enumerate(token_matrix):
            for j in range(int(lengths[i])):
                out[i, j] = self.embed_word(row[j])
        return torch.from_numpy(out).to(dtype)


class FallbackProvider(EmbeddingProvider):
    kind = "fallback"

    def __init__(self, seed: int = FALLBACK_SEED):
        self.seed = seed
        self._cache: dict[str, np.ndarray] = {}

    def embed_word(self, token: str) -> np.ndarray:
        if not token:
            raise EmptyInput("cannot embed an empty token")
        vec = self._cache.get(token)
        if vec is None:
            vec = hashed_ngram_vector(token, self.seed, self.dimension)
            vec.setflags(write=False)
            self._cache[token] = vec
        return vec


class WordSubwordProvider(EmbeddingProvider):
    """Fixed word table; unseen tokens fall back to hashed n-gram buckets.

    Bucket vectors are rescaled to the mean row norm of the table so composed
    vectors live at the same scale as real ones.
    """

    kind = "word_subword"

    def __init__(self, words: Sequence[str] | None = None, vectors: np.ndarray | None = None):
        self.index = {w: i for i, w in enumerate(words)} if words is not None else None
        self.vectors = vectors
        self._scale = 1.0
        if vectors is not None and len(vectors):
            self._scale = float(np.linalg.norm(vectors, axis=1).mean()) / math.sqrt(self.dimension)

    @property
    def available(self) -> bool:
        return self.vectors is not None

    def embed_word(self, token: str) -> np.ndarray:
        if not self.available:
            raise ProviderUnavailable("word_subword provider has no pretrained vectors loaded")
        if not token:
            raise EmptyInput("cannot embed an empty token")
        row = self.index.get(token)
        if row is not None:
            return self.vectors[row]
        return (hashed_ngram_vector(token) * self._scale).astype(np.float32)


class BpeCombinedProvider(EmbeddingProvider):
    """Byte-pair units looked up in a frozen unit table, merged by a trainable combiner."""

    kind = "bpe_combined"
    trainable = True

    def __init__(
        self,
        units: Sequence[str] | None = None,
        vectors: np.ndarray | None = None,
        segmenter: BytePairSegmenter | None = None,
        combiner: SubwordCombiner | None = None,
    ):
        self.index = {u: i for i, u in enumerate(units)} if units is not None else {}
        self.vectors = vectors
        self.segmenter = segmenter or default_segmenter()
        self.combiner = combiner or SubwordCombiner(self.dimension, self.dimension)

    def unit_vector(self, unit: str) -> np.ndarray:
        row = self.index.get(unit)
        if row is not None:
            return self.vectors[row]
        return hashed_ngram_vector(unit, UNIT_SEED, self.dimension)

    def unit_vectors(self, token: str) -> np.ndarray:
        return np.stack([self.unit_vector(u) for u in self.segmenter.segment(token)])

    def embed_word(self, token: str) -> np.ndarray:
        if not token:
            raise EmptyInput("cannot embed an empty token")
        with torch.no_grad():
            return combine_subwords(self.combiner, self.unit_vectors(token)).float().numpy()

    def embed_batch(self, token_matrix, lengths, dtype=torch.float32) -> torch.Tensor:
        # Differentiable w.r.t. the combiner; each distinct token is combined once.
        batch, max_len = len(token_matrix), max(len(row) for row in token_matrix)
        distinct: dict[str, int] = {}
        positions = []
        for i, row in enumerate(token_matrix):
            for j in range(int(lengths[i])):
                positions.append((i, j, distinct.setdefault(row[j], len(distinct))))
        unit_seqs = [torch.from_numpy(self.unit_vectors(tok)).to(dtype) for tok in distinct]
        unit_lengths = torch.tensor([u.shape[0] for u in unit_seqs])
        words = self.combiner(pad_sequence(unit_seqs, batch_first=True), unit_lengths)
        out = torch.zeros(batch, max_len, self.dimension, dtype=words.dtype)
        rows = torch.tensor([p[0] for p in positions])
        cols = torch.tensor([p[1] for p in positions])
        idx = torch.tensor([p[2] for p in positions])
        return out.index_put((rows, cols), words[idx])


def embed_word(provider: EmbeddingProvider, token: str) -> np.ndarray:
    return provider.embed_word(token)


def embed_sequence(provider: EmbeddingProvider, tokens: Sequence[str]) -> np.ndarray:
    return provider.embed_sequence(tokens)


# ---------------------------------------------------------------------------
# vector files


def _read_header(line: bytes) -> tuple[int, int]:
    try:
        count, dim = (int(x) for x in line.split())
    except ValueError:
        raise BadFormat(f"bad header line: {line[:80]!r}") from None
    if dim != EMBEDDING_DIM:
        raise DimensionMismatch(f"vector file declares dim {dim}, expected {EMBEDDING_DIM}")
    return count, dim


def read_text_vectors(path) -> tuple[list[str], np.ndarray]:
    """``count dim`` header followed by ``word v1 ... vdim`` lines."""
    with open(path, "rb") as fh:
        count, dim = _read_header(fh.readline())
        words = []
        vectors = np.empty((count, dim), dtype=np.float32)
        for i in range(count):
            line = fh.readline()
            if not line:
                raise BadFormat(f"expected {count} vectors, file ends after {i}")
            parts = line.decode("utf-8").rstrip("\n").rstrip(" ").split(" ")
            if len(parts) != dim + 1:
                raise BadFormat(f"vector {i} has {len(parts) - 1} values, expected {dim}")
            try:
                vectors[i] = np.array(parts[1:], dtype=np.float32)
            except ValueError:
                raise BadFormat(f"vector {i} has a non-numeric value") from None
            words.append(parts[0])
    if not np.isfinite(vectors).all():
        raise BadFormat("vector file contains non-finite values")
    return words, vectors


def read_binary_vectors(path) -> tuple[list[str], np.ndarray]:
    """word2vec binary layout: text header, then ``word<space>`` + dim little-endian float32."""
    with open(path, "rb") as fh:
        count, dim = _read_header(fh.readline())
        width = 4 * dim
        words = []
        vectors = np.empty((count, dim), dtype=np.float32)
        for i in range(count):
            chars = bytearray()
            while True:
                ch = fh.read(1)
                if not ch:
                    raise BadFormat(f"expected {count} vectors, file ends after {i}")
                if ch == b" ":
                    break
                if ch != b"\n":
                    chars.extend(ch)
            raw = fh.read(width)
            if len(raw) != width:
                raise BadFormat(f"vector {i} is truncated")
            vectors[i] = np.frombuffer(raw, dtype="<f4")
            words.append(chars.decode("utf-8"))
    if not np.isfinite(vectors).all():
        raise BadFormat("vector file contains non-finite values")
    return words, vectors


def write_text_vectors(path, words: Sequence[str], vectors: np.ndarray) -> None:
    vectors = np.asarray(vectors, dtype=np.float32)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(words)} {vectors.shape[1]}\n")
        for w, row in zip(words, vectors):
            values = " ".join(np.format_float_positional(x, unique=True, trim="-") for x in row)
            fh.write(f"{w} {values}\n")


def write_binary_vectors(path, words: Sequence[str], vectors: np.ndarray) -> None:
    vectors = np.asarray(vectors, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(f"{len(words)} {vectors.shape[1]}\n".encode())
        for w, row in zip(words, vectors):
            fh.write(w.encode("utf-8") + b" " + row.tobytes() + b"\n")


def _is_binary(path) -> bool:
    return Path(path).suffix in {".bin", ".w2v"}


def load_pretrained_vectors(path, kind: str) -> EmbeddingProvider:
    if kind not in ("word_subword", "bpe_combined"):
        raise ValueError(f"kind must be word_subword or bpe_combined, got {kind!r}")
    try:
        words, vectors = (read_binary_vectors if _is_binary(path) else read_text_vectors)(path)
    except UnicodeDecodeError as exc:
        raise BadFormat(str(exc)) from None
    if kind == "word_subword":
        return WordSubwordProvider(words, vectors)
    return BpeCombinedProvider(words, vectors)


def make_provider(kind: str, vectors_path=None) -> EmbeddingProvider:
    """Provider for a CLI ``--embeddings`` value (``fallback`` needs no file)."""
    if kind == "fallback":
        return FallbackProvider()
    if kind not in KINDS:
        raise ValueError(f"unknown embeddings kind {kind!r}")
    if vectors_path is not None:
        return load_pretrained_vectors(vectors_path, kind)
    if kind == "bpe_combined":
        return BpeCombinedProvider()
    raise ProviderUnavailable("word_subword embeddings need a vector file (--vectors)")

