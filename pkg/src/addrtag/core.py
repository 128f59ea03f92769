"""Address/tag data model shared by every other module."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field

from .countries import AD_HOC_COUNTRY, DEFAULT_COUNTRIES, CountrySet
from .errors import UnknownTag


class Tag(enum.IntEnum):
    StreetNumber = 0
    StreetName = 1
    Unit = 2
    Municipality = 3
    Province = 4
    PostalCode = 5
    Orientation = 6
    GeneralDelivery = 7


NUM_TAGS = len(Tag)


def tag_from_name(name: str) -> Tag:
    """Exact, case-sensitive lookup of a tag by name."""
    try:
        return Tag[name]
    except KeyError:
        raise UnknownTag(f"unknown tag name: {name!r}") from None


@dataclass(frozen=True)
class TagVocabulary:
    """The 8 semantic tags plus BOS and PAD bookkeeping entries."""

    tags: tuple[Tag, ...] = tuple(Tag)
    bos_index: int = NUM_TAGS
    pad_index: int = NUM_TAGS + 1

    def __post_init__(self) -> None:
        indices = {int(t) for t in self.tags}
        if self.bos_index == self.pad_index or {self.bos_index, self.pad_index} & indices:
            raise ValueError("BOS/PAD indices must be distinct from each other and the tags")

    @property
    def size(self) -> int:
        return len(self.tags) + 2

    @property
    def num_tags(self) -> int:
        return len(self.tags)


DEFAULT_VOCAB = TagVocabulary()


@dataclass(frozen=True)
class AddressSample:
    tokens: tuple[str, ...]
    tags: tuple[Tag, ...]
    country: str = AD_HOC_COUNTRY

    @classmethod
    def from_names(cls, tokens, tag_names, country: str = AD_HOC_COUNTRY) -> AddressSample:
        return cls(tuple(tokens), tuple(tag_from_name(n) for n in tag_names), country)

    @property
    def address(self) -> str:
        return " ".join(self.tokens)

    def to_record(self) -> dict:
        return {
            "address": self.address,
            "tags": [t.name for t in self.tags],
            "country": self.country,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_record(), ensure_ascii=False)

    @classmethod
    def from_record(cls, record: dict) -> AddressSample:
        """Inverse of :meth:`to_record`. Raises KeyError/TypeError/UnknownTag on bad input."""
        address = record["address"]
        tags = record["tags"]
        country = record["country"]
        if not isinstance(address, str) or not isinstance(country, str):
            raise TypeError("address and country must be strings")
        if not isinstance(tags, list):
            raise TypeError("tags must be a list")
        return cls(tuple(address.split()), tuple(tag_from_name(t) for t in tags), country)


@dataclass(frozen=True)
class ValidationResult:
    violations: tuple[str, ...] = field(default_factory=tuple)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


def validate_sample(s: AddressSample, countries: CountrySet = DEFAULT_COUNTRIES) -> ValidationResult:
    violations = []
    if not s.tokens:
        violations.append("empty sequence")
    if len(s.tokens) != len(s.tags):
        violations.append(f"length mismatch: {len(s.tokens)} tokens, {len(s.tags)} tags")
    for i, tok in enumerate(s.tokens):
        if not tok or any(ch.isspace() for ch in tok):
            violations.append(f"token {i} is empty or contains whitespace")
    for i, t in enumerate(s.tags):
        if not isinstance(t, Tag):
            violations.append(f"tag {i} is not a Tag: {t!r}")
    if s.country != AD_HOC_COUNTRY and s.country not in countries:
        violations.append(f"unknown country: {s.country!r}")
    return ValidationResult(tuple(violations))
