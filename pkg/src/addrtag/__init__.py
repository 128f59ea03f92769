"""Multinational address parsing with a sequence-to-sequence tagger."""

from .core import AddressSample, Tag, TagVocabulary, tag_from_name, validate_sample

__all__ = ["AddressSample", "Tag", "TagVocabulary", "tag_from_name", "validate_sample"]
__version__ = "0.1.0"
