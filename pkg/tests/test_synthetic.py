import pytest

from addrtag import synthetic
from addrtag.core import Tag, validate_sample
from addrtag.countries import DEFAULT_COUNTRIES, TRAINING_COUNTRIES, ZERO_SHOT_COUNTRIES, CountrySet, country_code
from addrtag.data import load_dataset


def test_country_split_sizes():
    assert len(TRAINING_COUNTRIES) == 20 and len(ZERO_SHOT_COUNTRIES) == 41
    assert not set(TRAINING_COUNTRIES) & set(ZERO_SHOT_COUNTRIES)
    assert "US" in DEFAULT_COUNTRIES and "JP" in DEFAULT_COUNTRIES
    assert country_code("South Korea") == "KR"
    with pytest.raises(ValueError):
        CountrySet(("US",), ("US",))


@pytest.mark.parametrize("name", sorted(synthetic.PATTERNS))
def test_generated_addresses_follow_pattern(name):
    samples = synthetic.generate(name, 50, 0)
    assert samples == synthetic.generate(name, 50, 0)
    for s in samples:
        assert validate_sample(s).ok
        collapsed = [t for i, t in enumerate(s.tags) if i == 0 or s.tags[i - 1] != t]
        assert tuple(collapsed) == synthetic.PATTERNS[name]


def test_optional_components():
    samples = synthetic.generate("A", 200, 0, optional={Tag.Unit: 0.5})
    with_unit = sum(Tag.Unit in s.tags for s in samples)
    assert 60 < with_unit < 140
    assert all(Tag.Orientation in s.tags for s in samples)


def test_vocabulary_covers_words():
    vocab = set(synthetic.vocabulary())
    assert {"Baker", "Gangnam", "Street"} <= vocab


def test_module_cli(tmp_path):
    out = tmp_path / "toy.jsonl"
    assert synthetic.main(["--pattern", "A", "--pattern", "B", "-n", "5", "--out", str(out)]) == 0
    assert [s.country for s in load_dataset(out)] == ["US"] * 5 + ["KR"] * 5
