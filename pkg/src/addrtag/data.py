"""Dataset loading, batching, incomplete-address synthesis and the reordering probe."""

from __future__ import annotations

import json
import os
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import DEFAULT_VOCAB, AddressSample, Tag, TagVocabulary, tag_from_name, validate_sample
from .countries import CountrySet
from .errors import (
    CannotDrop,
    InsufficientData,
    MalformedRecord,
    PatternMismatch,
    UnknownCountry,
)

DATA_DIR_ENV = "ADDRTAG_DATA_DIR"

DROPPABLE: frozenset[Tag] = frozenset(
    {Tag.StreetName, Tag.PostalCode, Tag.Municipality, Tag.Province}
)


def resolve_data_path(path: str | os.PathLike) -> Path:
    """Relative paths that do not exist locally are looked up under $ADDRTAG_DATA_DIR."""
    p = Path(path)
    if p.is_absolute() or p.exists():
        return p
    root = os.environ.get(DATA_DIR_ENV)
    if root and (Path(root) / p).exists():
        return Path(root) / p
    return p


def load_dataset(path, expected_countries: CountrySet | None = None) -> list[AddressSample]:
    samples = []
    with open(resolve_data_path(path), encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                sample = AddressSample.from_record(record)
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise MalformedRecord(line_no, str(exc)) from None
            if expected_countries is not None and sample.country not in expected_countries:
                raise UnknownCountry(f"line {line_no}: country {sample.country!r} not expected")
            result = validate_sample(sample, expected_countries or CountrySet())
            if not result.ok:
                raise MalformedRecord(line_no, "; ".join(result.violations))
            samples.append(sample)
    return samples


def save_dataset(samples: Iterable[AddressSample], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            fh.write(s.to_json() + "\n")


def group_by_country(samples: Iterable[AddressSample]) -> dict[str, list[AddressSample]]:
    groups: dict[str, list[AddressSample]] = defaultdict(list)
    for s in samples:
        groups[s.country].append(s)
    return dict(sorted(groups.items()))


# ---------------------------------------------------------------------------
# batching


@dataclass(frozen=True)
class Batch:
    samples: tuple[AddressSample, ...]
    token_matrix: tuple[tuple[str, ...], ...]
    tag_matrix: np.ndarray
    lengths: np.ndarray
    countries: tuple[str, ...]
    mask: np.ndarray

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def max_len(self) -> int:
        return self.tag_matrix.shape[1]


PAD_TOKEN = ""


def collate(samples: Sequence[AddressSample], vocab: TagVocabulary = DEFAULT_VOCAB) -> Batch:
    lengths = np.array([len(s.tokens) for s in samples], dtype=np.int64)
    max_len = int(lengths.max())
    tags = np.full((len(samples), max_len), vocab.pad_index, dtype=np.int64)
    tokens = []
    for i, s in enumerate(samples):
        tags[i, : len(s.tags)] = [int(t) for t in s.tags]
        tokens.append(tuple(s.tokens) + (PAD_TOKEN,) * (max_len - len(s.tokens)))
    mask = np.arange(max_len)[None, :] < lengths[:, None]
    return Batch(
        samples=tuple(samples),
        token_matrix=tuple(tokens),
        tag_matrix=tags,
        lengths=lengths,
        countries=tuple(s.country for s in samples),
        mask=mask,
    )


def make_batches(
    samples: Sequence[AddressSample],
    batch_size: int,
    vocab: TagVocabulary = DEFAULT_VOCAB,
    shuffle_seed: int | None = None,
) -> list[Batch]:
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    order = np.arange(len(samples))
    if shuffle_seed is not None:
        order = np.random.default_rng(shuffle_seed).permutation(len(samples))
    return [
        collate([samples[j] for j in order[i : i + batch_size]], vocab)
        for i in range(0, len(samples), batch_size)
    ]


# ---------------------------------------------------------------------------
# incomplete addresses


@dataclass(frozen=True)
class IncompletePolicy:
    droppable: frozenset[Tag] = DROPPABLE
    min_dropped: int = 1
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if frozenset(self.droppable) != DROPPABLE:
            raise ValueError("droppable must be {StreetName, PostalCode, Municipality, Province}")
        if self.min_dropped < 1:
            raise ValueError("min_dropped must be >= 1")


def is_incomplete(s: AddressSample) -> bool:
    """True when at least one of the four core components is absent."""
    return not DROPPABLE <= set(s.tags)


def _remove_classes(s: AddressSample, drop: set[Tag]) -> AddressSample:
    kept = [(tok, t) for tok, t in zip(s.tokens, s.tags) if t not in drop]
    return AddressSample(tuple(k[0] for k in kept), tuple(k[1] for k in kept), s.country)


def make_incomplete_variant(
    s: AddressSample,
    policy: IncompletePolicy = IncompletePolicy(),
    rng: np.random.Generator | None = None,
    drop: Iterable[Tag] | None = None,
) -> AddressSample:
    """Remove every token of one or more droppable tag classes.

    ``drop`` forces the exact set of classes to remove. Otherwise the number of
    classes is uniform over ``min_dropped..k`` (k eligible classes, reduced by one
    when removing all of them would empty the address) and the classes are drawn
    without replacement.
    """
    present = set(s.tags)
    if drop is not None:
        drop = set(drop)
        if not drop or not drop <= policy.droppable:
            raise CannotDrop(f"drop set must be a non-empty subset of {sorted(t.name for t in DROPPABLE)}")
        if not drop & present:
            raise CannotDrop("none of the requested classes occur in the sample")
        out = _remove_classes(s, drop)
        if not out.tokens:
            raise CannotDrop("dropping would empty the address")
        return out

    eligible = sorted(present & policy.droppable)
    if not eligible:
        raise CannotDrop("sample has no droppable class")
    max_k = len(eligible) if present - policy.droppable else len(eligible) - 1
    if max_k < policy.min_dropped:
        raise CannotDrop("dropping would empty the address")
    if rng is None:
        rng = np.random.default_rng(policy.rng_seed)
    k = int(rng.integers(policy.min_dropped, max_k + 1))
    chosen = rng.choice(len(eligible), size=k, replace=False)
    return _remove_classes(s, {eligible[i] for i in chosen})


def can_make_incomplete(s: AddressSample, policy: IncompletePolicy = IncompletePolicy()) -> bool:
    present = set(s.tags)
    eligible = present & policy.droppable
    if not eligible:
        return False
    max_k = len(eligible) if present - policy.droppable else len(eligible) - 1
    return max_k >= policy.min_dropped


def country_seed(seed: int, country: str) -> np.random.SeedSequence:
    """Per-country seed stream so country shards can be built independently."""
    return np.random.SeedSequence([seed, *country.encode("utf-8")])


@dataclass
class IncompleteBuild:
    train: list[AddressSample]
    holdout: list[AddressSample]
    counts: dict[str, tuple[int, int]] = field(default_factory=dict)
    policy: IncompletePolicy = IncompletePolicy()

    def manifest(self) -> dict[str, str]:
        m = {
            "kind": "incomplete_dataset",
            "seed": str(self.policy.rng_seed),
            "policy.droppable": ",".join(sorted(t.name for t in self.policy.droppable)),
            "policy.min_dropped": str(self.policy.min_dropped),
            "policy.class_count": "uniform",
            "total.train": str(len(self.train)),
            "total.holdout": str(len(self.holdout)),
        }
        for country, (n_train, n_hold) in sorted(self.counts.items()):
            m[f"count.{country}.train"] = str(n_train)
            m[f"count.{country}.holdout"] = str(n_hold)
        return m


def build_incomplete_dataset(
    samples: Sequence[AddressSample],
    policy: IncompletePolicy,
    train_n: int,
    holdout_n: int,
) -> IncompleteBuild:
    """Per-country disjoint train/holdout splits of synthesized incomplete addresses."""
    build = IncompleteBuild([], [], policy=policy)
    for country, group in group_by_country(samples).items():
        eligible = [s for s in group if can_make_incomplete(s, policy)]
        need = train_n + holdout_n
        if len(eligible) < need:
            raise InsufficientData(country, need, len(eligible))
        rng = np.random.default_rng(country_seed(policy.rng_seed, country))
        picked = rng.choice(len(eligible), size=need, replace=False)
        variants = [make_incomplete_variant(eligible[i], policy, rng) for i in picked]
        build.train.extend(variants[:train_n])
        build.holdout.extend(variants[train_n:])
        build.counts[country] = (train_n, holdout_n)
    return build


# ---------------------------------------------------------------------------
# reordering probe


def class_blocks(s: AddressSample) -> dict[Tag, list[tuple[str, Tag]]]:
    """Tokens grouped by tag class, in order of first appearance; within-class order kept."""
    blocks: dict[Tag, list[tuple[str, Tag]]] = {}
    for tok, t in zip(s.tokens, s.tags):
        blocks.setdefault(t, []).append((tok, t))
    return blocks


def reorder_to_pattern(s: AddressSample, pattern: Sequence[Tag]) -> AddressSample:
    blocks = class_blocks(s)
    missing = set(blocks) - set(pattern)
    if missing:
        raise PatternMismatch(
            f"sample has classes absent from the pattern: {sorted(t.name for t in missing)}"
        )
    pairs = [pair for t in pattern for pair in blocks.get(t, [])]
    return AddressSample(tuple(p[0] for p in pairs), tuple(p[1] for p in pairs), s.country)


def reorder_probe(
    samples: Sequence[AddressSample],
    pattern_a: Sequence[Tag],
    pattern_b: Sequence[Tag],
    rng_seed: int,
) -> list[AddressSample]:
    """Reorder each sample's class blocks to pattern A or B, split evenly at random.

    Output keeps input order; with an odd count pattern A receives the extra sample.
    """
    for pat in (pattern_a, pattern_b):
        if len(set(pat)) != len(pat):
            raise ValueError("patterns must not repeat a tag class")
    n = len(samples)
    order = np.random.default_rng(rng_seed).permutation(n)
    use_a = np.zeros(n, dtype=bool)
    use_a[order[: (n + 1) // 2]] = True
    return [
        reorder_to_pattern(s, pattern_a if use_a[i] else pattern_b)
        for i, s in enumerate(samples)
    ]


def parse_pattern(text: str) -> tuple[Tag, ...]:
    """``"StreetNumber,StreetName,Municipality"`` -> tuple of tags."""
    return tuple(tag_from_name(part.strip()) for part in text.split(",") if part.strip())
