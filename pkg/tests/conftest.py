import json
from pathlib import Path

import numpy as np
import pytest

GOLDENS = json.loads((Path(__file__).parent / "oracles" / "goldens.json").read_text())["goldens"]


@pytest.fixture
def goldens():
    return GOLDENS


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def assert_golden(value, name, sigmas=4.0):
    g = GOLDENS[name]
    assert abs(value - g["value"]) <= sigmas * g["stderr"], (name, value, g)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
