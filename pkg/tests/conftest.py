import warnings

import numpy as np
import pytest
import torch

from addrtag.core import AddressSample, Tag

warnings.filterwarnings("ignore", category=UserWarning, module="torch")
torch.set_num_threads(1)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    if call.when == "call":
        item.rep_call_passed = outcome.get_result().passed


@pytest.fixture
def baker():
    return AddressSample.from_names(
        ["221", "B", "Baker", "Street", "London", "NW1", "6XE"],
        ["StreetNumber", "Unit", "StreetName", "StreetName", "Municipality", "PostalCode", "PostalCode"],
        "GB",
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_sample(rng, country="US", max_len=10):
    n = int(rng.integers(1, max_len + 1))
    tokens = tuple(f"t{int(rng.integers(1000))}" for _ in range(n))
    tags = tuple(Tag(int(k)) for k in rng.integers(0, 8, n))
    return AddressSample(tokens, tags, country)
