"""Country configuration: the multinational training split and the zero-shot split."""

from __future__ import annotations

from dataclasses import dataclass

# Prose country names as they appear in result tables, mapped to ISO-3166 alpha-2.
NAME_TO_CODE: dict[str, str] = {
    "United States": "US",
    "Brazil": "BR",
    "South Korea": "KR",
    "Australia": "AU",
    "Mexico": "MX",
    "Germany": "DE",
    "Spain": "ES",
    "Netherlands": "NL",
    "Canada": "CA",
    "Switzerland": "CH",
    "Poland": "PL",
    "Norway": "NO",
    "Austria": "AT",
    "Finland": "FI",
    "Denmark": "DK",
    "Czechia": "CZ",
    "Italy": "IT",
    "France": "FR",
    "UK": "GB",
    "Russia": "RU",
    "Belgium": "BE",
    "Sweden": "SE",
    "Argentina": "AR",
    "India": "IN",
    "Romania": "RO",
    "Slovakia": "SK",
    "Hungary": "HU",
    "Japan": "JP",
    "Iceland": "IS",
    "Venezuela": "VE",
    "Philippines": "PH",
    "Slovenia": "SI",
    "Ukraine": "UA",
    "Belarus": "BY",
    "Serbia": "RS",
    "Croatia": "HR",
    "Greece": "GR",
    "New Zealand": "NZ",
    "Portugal": "PT",
    "Bulgaria": "BG",
    "Lithuania": "LT",
    "Faroe Islands": "FO",
    "Réunion": "RE",
    "Moldova": "MD",
    "Indonesia": "ID",
    "Bermuda": "BM",
    "Malaysia": "MY",
    "South Africa": "ZA",
    "Latvia": "LV",
    "Kazakhstan": "KZ",
    "New Caledonia": "NC",
    "Estonia": "EE",
    "Singapore": "SG",
    "Bangladesh": "BD",
    "Paraguay": "PY",
    "Cyprus": "CY",
    "Bosnia": "BA",
    "Ireland": "IE",
    "Algeria": "DZ",
    "Colombia": "CO",
    "Uzbekistan": "UZ",
}

TRAINING_COUNTRIES: tuple[str, ...] = (
    "US", "BR", "KR", "AU", "MX", "DE", "ES", "NL", "CA", "CH",
    "PL", "NO", "AT", "FI", "DK", "CZ", "IT", "FR", "GB", "RU",
)

ZERO_SHOT_COUNTRIES: tuple[str, ...] = (
    "BE", "SE", "AR", "IN", "RO", "SK", "HU", "JP", "IS", "VE", "PH",
    "SI", "UA", "BY", "RS", "HR", "GR", "NZ", "PT", "BG", "LT",
    "FO", "RE", "MD", "ID", "BM", "MY", "ZA", "LV", "KZ", "NC",
    "EE", "SG", "BD", "PY", "CY", "BA", "IE", "DZ", "CO", "UZ",
)

AD_HOC_COUNTRY = "??"


@dataclass(frozen=True)
class CountrySet:
    training: tuple[str, ...] = TRAINING_COUNTRIES
    zero_shot: tuple[str, ...] = ZERO_SHOT_COUNTRIES

    def __post_init__(self) -> None:
        overlap = set(self.training) & set(self.zero_shot)
        if overlap:
            raise ValueError(f"training and zero-shot sets overlap: {sorted(overlap)}")

    @property
    def all(self) -> frozenset[str]:
        return frozenset(self.training) | frozenset(self.zero_shot)

    def __contains__(self, code: object) -> bool:
        return code in self.all


DEFAULT_COUNTRIES = CountrySet()


def country_code(name_or_code: str) -> str:
    """Normalize a prose country name or an alpha-2 code to the alpha-2 code."""
    if name_or_code in NAME_TO_CODE:
        return NAME_TO_CODE[name_or_code]
    code = name_or_code.upper()
    if code in DEFAULT_COUNTRIES or code == AD_HOC_COUNTRY:
        return code
    raise KeyError(f"unknown country: {name_or_code!r}")
