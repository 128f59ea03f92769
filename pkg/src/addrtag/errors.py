"""Exception hierarchy.

``DataError`` subclasses signal bad input data (CLI exit code 2) and
``ModelError`` subclasses signal model/runtime failures (exit code 3).
"""

from __future__ import annotations


class AddrTagError(Exception):
    """Base class for every error raised by the package."""


class DataError(AddrTagError, ValueError):
    pass


class ModelError(AddrTagError, RuntimeError):
    pass


class UnknownTag(DataError):
    pass


class MalformedRecord(DataError):
    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class UnknownCountry(DataError):
    pass


class CannotDrop(DataError):
    pass


class InsufficientData(DataError):
    def __init__(self, country: str, needed: int, available: int):
        super().__init__(f"{country}: need {needed} eligible samples, have {available}")
        self.country = country
        self.needed = needed
        self.available = available


class PatternMismatch(DataError):
    pass


class LengthMismatch(DataError):
    pass


class CountryNotAllowed(DataError):
    pass


class EmptyInput(DataError):
    pass


class EmptyBatch(DataError):
    pass


class TooFewDomains(DataError):
    pass


class ProviderUnavailable(ModelError):
    pass


class BadFormat(ModelError):
    pass


class DimensionMismatch(ModelError):
    pass


class NonFiniteActivation(ModelError):
    pass


class NonFiniteLoss(ModelError):
    pass


class MissingGold(ModelError):
    pass


class ManifestMismatch(ModelError):
    pass


class CorruptFile(ModelError):
    pass
