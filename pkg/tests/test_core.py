import json

import pytest

from addrtag.core import DEFAULT_VOCAB, NUM_TAGS, AddressSample, Tag, tag_from_name, validate_sample
from addrtag.errors import UnknownTag


def test_tag_space():
    assert NUM_TAGS == 8
    assert [t.name for t in Tag] == [
        "StreetNumber", "StreetName", "Unit", "Municipality",
        "Province", "PostalCode", "Orientation", "GeneralDelivery",
    ]
    assert DEFAULT_VOCAB.bos_index not in {int(t) for t in Tag}
    assert DEFAULT_VOCAB.pad_index not in {int(t) for t in Tag}
    assert DEFAULT_VOCAB.size == 10


@pytest.mark.parametrize("name", [t.name for t in Tag])
def test_tag_from_name_roundtrip(name):
    assert tag_from_name(name).name == name


@pytest.mark.parametrize("bad", ["street", "BOS", "PAD", ""])
def test_tag_from_name_rejects(bad):
    with pytest.raises(UnknownTag):
        tag_from_name(bad)


def test_baker_street_is_valid():
    s = AddressSample.from_names(
        ["221", "B", "Baker", "Street"], ["StreetNumber", "Unit", "StreetName", "StreetName"], "GB"
    )
    assert validate_sample(s).ok
    assert s.address == "221 B Baker Street"


@pytest.mark.parametrize(
    "tokens, tags, country",
    [
        ((), (), "US"),
        (("a", "b"), (Tag.Unit,), "US"),
        (("a b",), (Tag.Unit,), "US"),
        (("a",), (3,), "US"),
        (("a",), (Tag.Unit,), "XX"),
    ],
)
def test_validation_violations(tokens, tags, country):
    assert not validate_sample(AddressSample(tokens, tags, country)).ok


def test_record_roundtrip(baker):
    rec = json.loads(baker.to_json())
    assert AddressSample.from_record(rec) == baker
