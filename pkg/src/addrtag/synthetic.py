"""Toy multi-pattern address grammar for desk-scale experiments.

Each pattern comes with its own vocabulary style, the way each country's
addresses come in its own language. Some western street names are also city
names, so component order carries information too.
"""

from __future__ import annotations

import argparse
from typing import Sequence

import numpy as np

from .core import AddressSample, Tag
from .data import save_dataset

WESTERN = {
    "street": (
        "Baker", "Victoria", "Main", "King", "Queen", "Church", "Park", "Oak", "Maple",
        "Cedar", "Elm", "Washington", "Lincoln", "Highland", "Lake", "Hill", "Sunset",
        "Mill", "River", "Station", "Bahnhof", "Haupt", "Linden", "Garten", "Schiller",
        "Principale", "Laurier", "Papineau", "Marconi", "Garibaldi", "Verdi", "Oxford",
    ),
    "street_type": (
        "Street", "Road", "Avenue", "Lane", "Drive", "Way", "strasse", "weg", "rue",
        "via", "calle", "Boulevard",
    ),
    "municipality": (
        "London", "Springfield", "Toronto", "Montreal", "Ottawa", "Berlin", "Hamburg",
        "Munich", "Vienna", "Paris", "Lyon", "Marseille", "Rome", "Milan", "Naples",
        "Victoria", "Washington", "Lincoln", "Madrid", "Sydney", "Perth", "Zurich",
    ),
    "province": (
        "Ontario", "Quebec", "Alberta", "Bavaria", "Hesse", "Tyrol", "Lombardy", "Lazio",
        "Texas", "Ohio", "Maine", "Queensland", "Catalonia", "Normandie", "Provence",
    ),
    "unit": ("A", "B", "C", "D", "1A", "2B", "apt4", "suite5", "unit7", "flat2"),
    "orientation": ("North", "South", "East", "West", "Nord", "Sud", "Est", "Ouest"),
}
KOREAN = {
    "street": (
        "Gangnam", "Sejong", "Teheran", "Jongno", "Cheonggye", "Eulji", "Toegye",
        "Dosan", "Apgujeong", "Hannam", "Itaewon", "Mapo", "Yeouido", "Banpo",
        "Sinchon", "Hongik", "Gwanghwamun", "Samseong", "Seolleung", "Bongeunsa",
    ),
    "street_type": ("ro", "gil", "daero", "ro1gil", "ro2gil", "beongil"),
    "municipality": (
        "Seoul", "Busan", "Incheon", "Daegu", "Daejeon", "Gwangju", "Ulsan", "Suwon",
        "Changwon", "Goyang", "Yongin", "Seongnam", "Cheongju", "Jeonju", "Ansan",
    ),
    "province": (
        "Gyeonggi", "Gangwon", "Chungbuk", "Chungnam", "Jeonbuk", "Jeonnam",
        "Gyeongbuk", "Gyeongnam", "Jeju", "Seoulteukbyeolsi", "Busangwangyeoksi",
    ),
    "unit": ("101ho", "202ho", "305ho", "B1", "1cheung", "2cheung"),
    "orientation": ("Dong", "Seo", "Nam", "Buk"),  # unused by pattern B
}
STYLES = {"western": WESTERN, "korean": KOREAN}

PATTERN_A: tuple[Tag, ...] = (
    Tag.StreetNumber, Tag.Unit, Tag.StreetName, Tag.Orientation,
    Tag.Municipality, Tag.Province, Tag.PostalCode,
)
PATTERN_B: tuple[Tag, ...] = (
    Tag.Province, Tag.Municipality, Tag.StreetName, Tag.StreetNumber,
    Tag.Unit, Tag.PostalCode,
)
# Held out: street name before the number, otherwise ordered like A.
PATTERN_C: tuple[Tag, ...] = (
    Tag.StreetName, Tag.StreetNumber, Tag.Unit, Tag.Orientation,
    Tag.Municipality, Tag.Province, Tag.PostalCode,
)
PATTERNS = {"A": PATTERN_A, "B": PATTERN_B, "C": PATTERN_C}
PATTERN_COUNTRY = {"A": "US", "B": "KR", "C": "BE"}
PATTERN_STYLE = {"A": "western", "B": "korean", "C": "western"}

# Inclusion probabilities for optional components. Empty by default: every
# address of a pattern has the same shape. Pass ``optional`` to vary it.
OPTIONAL: dict[Tag, float] = {}


def _component(tag: Tag, rng: np.random.Generator, pools: dict) -> list[str]:
    pick = lambda key: pools[key][int(rng.integers(len(pools[key])))]  # noqa: E731
    if tag is Tag.StreetNumber:
        return [str(int(rng.integers(1, 10_000)))]
    if tag is Tag.StreetName:
        return [pick("street"), pick("street_type")]
    if tag is Tag.Unit:
        return [pick("unit")]
    if tag is Tag.Municipality:
        return [pick("municipality")]
    if tag is Tag.Province:
        return [pick("province")]
    if tag is Tag.PostalCode:
        if pools is KOREAN or rng.random() < 0.5:
            return [f"{int(rng.integers(0, 100_000)):05d}"]
        letters = "ABCEGHJKLMNPRSTVXY"
        a, b, c = (letters[int(rng.integers(len(letters)))] for _ in range(3))
        d1, d2, d3 = (int(x) for x in rng.integers(0, 10, size=3))
        return [f"{a}{d1}{b}{d2}{c}{d3}"]
    if tag is Tag.Orientation:
        return [pick("orientation")]
    return ["PO", "BOX"]


def make_address(
    pattern: Sequence[Tag],
    rng: np.random.Generator,
    country: str = "??",
    style: str = "western",
    optional: dict[Tag, float] | None = None,
) -> AddressSample:
    pools = STYLES[style]
    optional = OPTIONAL if optional is None else optional
    tokens: list[str] = []
    tags: list[Tag] = []
    for tag in pattern:
        if tag in optional and rng.random() >= optional[tag]:
            continue
        parts = _component(tag, rng, pools)
        tokens.extend(parts)
        tags.extend([tag] * len(parts))
    return AddressSample(tuple(tokens), tuple(tags), country)


def generate(
    pattern: str | Sequence[Tag],
    n: int,
    seed: int,
    country: str | None = None,
    style: str | None = None,
    optional: dict[Tag, float] | None = None,
) -> list[AddressSample]:
    """``n`` addresses following one pattern (a key of ``PATTERNS`` or an explicit tag order)."""
    if isinstance(pattern, str):
        country = country or PATTERN_COUNTRY[pattern]
        style = style or PATTERN_STYLE[pattern]
        pattern = PATTERNS[pattern]
    rng = np.random.default_rng(seed)
    return [make_address(pattern, rng, country or "??", style or "western", optional) for _ in range(n)]


def vocabulary() -> list[str]:
    return sorted({w for pools in STYLES.values() for pool in pools.values() for w in pool})


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="Write a toy address dataset (JSON lines).")
    parser.add_argument("--pattern", choices=sorted(PATTERNS), action="append", required=True)
    parser.add_argument("-n", type=int, default=1000, help="addresses per pattern")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", required=True)
    args = parser.parse_args(argv)
    samples = []
    for k, name in enumerate(args.pattern):
        samples += generate(name, args.n, args.seed + k)
    save_dataset(samples, args.out)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
