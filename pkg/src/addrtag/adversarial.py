"""Gradient reversal, the two-class domain discriminator and ADANN domain pairing."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .errors import EmptyBatch, TooFewDomains

SOURCE, TARGET = 0, 1


class GradReverse(torch.autograd.Function):
    @staticmethod
    def forward(ctx, x, lambd):
        ctx.lambd = lambd
        return x.view_as(x)

    @staticmethod
    def backward(ctx, grad_output):
        return grad_output.neg() * ctx.lambd, None


def grad_reverse(x: torch.Tensor, lambd: float = 1.0) -> torch.Tensor:
    """Identity forward; multiplies the incoming gradient by ``-lambd`` on the way back."""
    if lambd < 0:
        raise ValueError("lambda must be non-negative")
    return GradReverse.apply(x, float(lambd))


class DomainDiscriminator(nn.Module):
    """Linear map from the encoder's final hidden state to two domain logits."""

    def __init__(self, hidden_dim: int):
        super().__init__()
        self.linear = nn.Linear(hidden_dim, 2)

    def forward(self, context: torch.Tensor) -> torch.Tensor:
        return self.linear(context)


def discriminate_domain(d: DomainDiscriminator, context: torch.Tensor) -> torch.Tensor:
    """Two logits; class 0 is the source domain and class 1 the target domain."""
    return d(context)


@dataclass(frozen=True)
class DomainPair:
    source: str
    target: str

    def __post_init__(self) -> None:
        if self.source == self.target:
            raise ValueError("source and target domains must differ")


def adann_pairing(countries: Sequence[str], epoch_seed: int) -> list[DomainPair]:
    """One sweep: every country is the source once, paired with a uniformly drawn other country."""
    countries = list(dict.fromkeys(countries))
    if len(countries) < 2:
        raise TooFewDomains(f"adversarial training needs at least 2 domains, got {len(countries)}")
    rng = np.random.default_rng(epoch_seed)
    pairs = []
    for i in rng.permutation(len(countries)):
        j = int(rng.integers(len(countries) - 1))
        if j >= i:
            j += 1
        pairs.append(DomainPair(countries[i], countries[j]))
    return pairs


def constant_lambda(value: float = 1.0):
    """Schedule hook: maps (epoch, step) to the reversal strength."""
    return lambda epoch, step: value


@dataclass
class AdversarialLosses:
    task: torch.Tensor
    domain_source: torch.Tensor
    domain_target: torch.Tensor

    @property
    def total(self) -> torch.Tensor:
        return self.task + self.domain_source + self.domain_target


def adversarial_batch_loss(model, provider, source_batch, target_batch, lambd: float = 1.0) -> AdversarialLosses:
    """Task loss on the source batch; domain losses on both, reversed into the encoder.

    The discriminator sees the encoder's final hidden state through ``grad_reverse``
    so its own weights get the plain gradient while the encoder gets it scaled by
    ``-lambd``.
    """
    if len(source_batch) == 0 or len(target_batch) == 0:
        raise EmptyBatch("source and target batches must be non-empty")
    if model.discriminator is None:
        raise ValueError("model has no domain discriminator (build it with adversarial=True)")

    x_src, len_src = model.embed_batch(provider, source_batch)
    gold = torch.as_tensor(source_batch.tag_matrix)
    mask = torch.as_tensor(source_batch.mask)
    enc_src = model.encode(x_src, len_src)
    logits = model.decode(enc_src, gold=gold, teacher_forcing=True)
    task = model.loss(logits, gold, mask)

    x_tgt, len_tgt = model.embed_batch(provider, target_batch)
    enc_tgt = model.encode(x_tgt, len_tgt)

    d_src = model.discriminator(grad_reverse(enc_src.h, lambd))
    d_tgt = model.discriminator(grad_reverse(enc_tgt.h, lambd))
    src_labels = torch.full((d_src.shape[0],), SOURCE, dtype=torch.long)
    tgt_labels = torch.full((d_tgt.shape[0],), TARGET, dtype=torch.long)
    return AdversarialLosses(
        task=task,
        domain_source=F.cross_entropy(d_src, src_labels),
        domain_target=F.cross_entropy(d_tgt, tgt_labels),
    )
