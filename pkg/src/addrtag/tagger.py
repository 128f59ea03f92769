"""Sequence-to-sequence address tagger.

A one-layer LSTM encoder reads the embedded address; a one-layer LSTM decoder
emits exactly one tag per input token, fed at each step with the previous tag
(plain variant) or with the previous tag concatenated to an additive-attention
context over the encoder outputs (attention variant).
"""

from __future__ import annotations

import zlib
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn
from torch.nn.utils.rnn import pack_padded_sequence, pad_packed_sequence

from .adversarial import DomainDiscriminator
from .core import DEFAULT_VOCAB, NUM_TAGS, AddressSample, Tag
from .data import collate
from .embeddings import EMBEDDING_DIM, EmbeddingProvider, SubwordCombiner
from .errors import EmptyInput, MissingGold, NonFiniteActivation

VARIANTS = ("base", "attention")
_VARIANT_ALIASES = {"plain": "base"}


@dataclass(frozen=True)
class ModelConfig:
    variant: str = "base"
    adversarial: bool = False
    embeddings: str = "fallback"
    input_dim: int = EMBEDDING_DIM
    hidden_dim: int = 1024
    tag_dim: int = 32
    attention_dim: int = 0  # 0 -> hidden_dim
    tag_repr: str = "learned"  # or "one_hot" (tag_dim must equal the label-space size)

    def __post_init__(self) -> None:
        object.__setattr__(self, "variant", _VARIANT_ALIASES.get(self.variant, self.variant))
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.tag_repr not in ("learned", "one_hot"):
            raise ValueError("tag_repr must be 'learned' or 'one_hot'")
        if self.tag_repr == "one_hot" and self.tag_dim != DEFAULT_VOCAB.size:
            raise ValueError(f"one_hot tag representation needs tag_dim={DEFAULT_VOCAB.size}")
        if min(self.input_dim, self.hidden_dim, self.tag_dim) < 1 or self.attention_dim < 0:
            raise ValueError("dimensions must be positive")

    @property
    def align_dim(self) -> int:
        return self.attention_dim or self.hidden_dim

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EncoderOutputs:
    outputs: torch.Tensor  # (B, T, H), zero past each length
    h: torch.Tensor  # (B, H) final hidden state at each true length
    c: torch.Tensor  # (B, H)
    mask: torch.Tensor  # (B, T) bool
    keys: torch.Tensor | None = None  # W_o O_j, cached for attention


class AdditiveAttention(nn.Module):
    """Scores ``p . tanh(W_h h + W_o O_j)`` normalized with a softmax over positions."""

    def __init__(self, hidden_dim: int, align_dim: int):
        super().__init__()
        self.W_h = nn.Linear(hidden_dim, align_dim, bias=False)
        self.W_o = nn.Linear(hidden_dim, align_dim, bias=False)
        self.p = nn.Linear(align_dim, 1, bias=False)

    def scores(self, h_prev: torch.Tensor, keys: torch.Tensor) -> torch.Tensor:
        return self.p(torch.tanh(self.W_h(h_prev).unsqueeze(1) + keys)).squeeze(-1)


def masked_softmax(scores: torch.Tensor, mask: torch.Tensor | None) -> torch.Tensor:
    if mask is not None:
        scores = scores.masked_fill(~mask, float("-inf"))
    return torch.softmax(scores, dim=-1)


def attention_weights(attn: AdditiveAttention, h_prev: torch.Tensor, enc: EncoderOutputs) -> torch.Tensor:
    """(B, T) weights; padded positions get exactly zero."""
    if enc.outputs.shape[1] == 0:
        raise EmptyInput("attention over an empty encoder sequence")
    keys = enc.keys if enc.keys is not None else attn.W_o(enc.outputs)
    alpha = masked_softmax(attn.scores(h_prev, keys), enc.mask)
    if not torch.isfinite(alpha).all():
        raise NonFiniteActivation("attention weights are not finite")
    return alpha


def context_vector(alpha: torch.Tensor, outputs: torch.Tensor) -> torch.Tensor:
    """Convex combination of encoder outputs: sum_k alpha_k O_k."""
    return torch.bmm(alpha.unsqueeze(1), outputs).squeeze(1)


def _fan_in(name: str, shapes: dict[str, torch.Size]) -> int:
    shape = shapes[name]
    if len(shape) >= 2:
        return shape[1]
    weight = name.replace("bias", "weight")
    return shapes[weight][1] if weight in shapes else shape[0]


def init_parameters(model: nn.Module, seed: int) -> None:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) per block.

    Each block draws from its own generator keyed on (seed, block name), so
    adding or removing a block (discriminator, combiner) leaves the others as-is.
    """
    shapes = {n: p.shape for n, p in model.named_parameters()}
    with torch.no_grad():
        for name, param in model.named_parameters():
            if not param.requires_grad:
                continue
            bound = 1.0 / np.sqrt(_fan_in(name, shapes))
            gen = torch.Generator().manual_seed((seed * 1_000_003 + zlib.crc32(name.encode())) % 2**63)
            values = torch.rand(param.shape, generator=gen, dtype=torch.float64)
            param.copy_((values * 2 - 1) * bound)


class AddressTagger(nn.Module):
    def __init__(self, config: ModelConfig = ModelConfig(), seed: int = 0):
        super().__init__()
        self.config = config
        vocab = DEFAULT_VOCAB
        self.bos_index = vocab.bos_index
        self.pad_index = vocab.pad_index
        H = config.hidden_dim

        self.encoder = nn.LSTM(config.input_dim, H, batch_first=True)
        if config.tag_repr == "one_hot":
            self.tag_embedding = nn.Embedding.from_pretrained(torch.eye(vocab.size), freeze=True)
        else:
            self.tag_embedding = nn.Embedding(vocab.size, config.tag_dim)
        dec_in = config.tag_dim + (H if config.variant == "attention" else 0)
        self.decoder = nn.LSTMCell(dec_in, H)
        self.attention = AdditiveAttention(H, config.align_dim) if config.variant == "attention" else None
        self.output = nn.Linear(H, NUM_TAGS)
        self.discriminator = DomainDiscriminator(H) if config.adversarial else None
        self.combiner = SubwordCombiner(config.input_dim, config.input_dim) if config.embeddings == "bpe_combined" else None
        init_parameters(self, seed)

    @property
    def dtype(self) -> torch.dtype:
        return self.output.weight.dtype

    # -- embedding -----------------------------------------------------------

    def bind(self, provider: EmbeddingProvider) -> EmbeddingProvider:
        """Share this model's combiner with a byte-pair provider."""
        if provider.kind != self.config.embeddings:
            raise ValueError(f"model expects {self.config.embeddings} embeddings, got {provider.kind}")
        if self.combiner is not None:
            provider.combiner = self.combiner
        return provider

    def embed_batch(self, provider: EmbeddingProvider, batch) -> tuple[torch.Tensor, torch.Tensor]:
        if self.combiner is not None:
            provider.combiner = self.combiner
        x = provider.embed_batch(batch.token_matrix, batch.lengths, dtype=self.dtype)
        return x, torch.as_tensor(batch.lengths)

    # -- encoder -------------------------------------------------------------

    def encode(self, x: torch.Tensor, lengths: torch.Tensor | Sequence[int] | None = None) -> EncoderOutputs:
        if x.ndim == 2:
            x = x.unsqueeze(0)
        if x.shape[1] == 0:
            raise EmptyInput("cannot encode an empty sequence")
        if lengths is None:
            lengths = torch.full((x.shape[0],), x.shape[1], dtype=torch.long)
        lengths = torch.as_tensor(lengths, dtype=torch.long)
        packed = pack_padded_sequence(x, lengths.cpu(), batch_first=True, enforce_sorted=False)
        out, (h_n, c_n) = self.encoder(packed)
        outputs, _ = pad_packed_sequence(out, batch_first=True, total_length=x.shape[1])
        mask = torch.arange(x.shape[1])[None, :] < lengths[:, None]
        if not torch.isfinite(outputs).all():
            raise NonFiniteActivation("encoder produced non-finite outputs")
        enc = EncoderOutputs(outputs, h_n[0], c_n[0], mask)
        if self.attention is not None:
            enc.keys = self.attention.W_o(outputs)
        return enc

    # -- decoder -------------------------------------------------------------

    def decode_step_plain(self, state, last_tag: torch.Tensor):
        h, c = self.decoder(self.tag_embedding(last_tag), state)
        return self.output(h), (h, c)

    def decode_step_attention(self, state, last_tag: torch.Tensor, enc: EncoderOutputs):
        h_prev, _ = state
        alpha = attention_weights(self.attention, h_prev, enc)
        ctx = context_vector(alpha, enc.outputs)
        step_input = torch.cat([self.tag_embedding(last_tag), ctx], dim=-1)
        h, c = self.decoder(step_input, state)
        return self.output(h), (h, c), alpha

    def decode(
        self,
        enc: EncoderOutputs,
        gold: torch.Tensor | None = None,
        teacher_forcing: bool = False,
        return_attention: bool = False,
    ):
        """(B, T, 8) logits, one row per input position."""
        batch, steps = enc.mask.shape
        if teacher_forcing:
            if gold is None:
                raise MissingGold("teacher forcing needs gold tags")
            gold = torch.as_tensor(gold, dtype=torch.long)
            if gold.ndim == 1:
                gold = gold.unsqueeze(0)
            if gold.shape != (batch, steps):
                raise MissingGold(f"gold shape {tuple(gold.shape)} != {(batch, steps)}")
        state = (enc.h, enc.c)
        last = torch.full((batch,), self.bos_index, dtype=torch.long)
        logits, alphas = [], []
        for i in range(steps):
            if self.attention is None:
                step_logits, state = self.decode_step_plain(state, last)
            else:
                step_logits, state, alpha = self.decode_step_attention(state, last, enc)
                alphas.append(alpha)
            logits.append(step_logits)
            last = gold[:, i] if teacher_forcing else step_logits.argmax(dim=-1)
        out = torch.stack(logits, dim=1)
        if not torch.isfinite(out).all():
            raise NonFiniteActivation("decoder produced non-finite logits")
        if return_attention:
            return out, (torch.stack(alphas, dim=1) if alphas else None)
        return out

    def forward(self, x, lengths=None, gold=None, teacher_forcing: bool = False, return_attention: bool = False):
        return self.decode(self.encode(x, lengths), gold, teacher_forcing, return_attention)

    def loss(self, logits: torch.Tensor, gold, mask) -> torch.Tensor:
        return masked_cross_entropy(logits, torch.as_tensor(gold), torch.as_tensor(mask))

    @torch.no_grad()
    def predict(self, x, lengths=None) -> torch.Tensor:
        return self.forward(x, lengths).argmax(dim=-1)


def masked_cross_entropy(logits: torch.Tensor, gold: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Mean cross-entropy over unmasked positions of the whole batch."""
    return F.cross_entropy(logits[mask], gold[mask])


def encode(model: AddressTagger, x) -> EncoderOutputs:
    return model.encode(torch.as_tensor(x, dtype=model.dtype))


def forward(model: AddressTagger, x, gold=None, teacher_forcing: bool = False) -> torch.Tensor:
    """(n, 8) logits for a single embedded sequence."""
    return model(torch.as_tensor(x, dtype=model.dtype), gold=gold, teacher_forcing=teacher_forcing)[0]


@torch.no_grad()
def predict_batch(model: AddressTagger, provider: EmbeddingProvider, batch) -> list[list[Tag]]:
    x, lengths = model.embed_batch(provider, batch)
    pred = model.predict(x, lengths).numpy()
    return [[Tag(int(k)) for k in pred[i, : int(n)]] for i, n in enumerate(batch.lengths)]


def greedy_parse(model: AddressTagger, provider: EmbeddingProvider, tokens: Sequence[str]) -> list[Tag]:
    """Tag every token of one address; ties in the argmax go to the lowest tag index."""
    if len(tokens) == 0:
        raise EmptyInput("cannot parse an empty address")
    placeholder = AddressSample(tuple(tokens), (Tag.StreetNumber,) * len(tokens))
    return predict_batch(model, provider, collate([placeholder]))[0]
