import numpy as np
import pytest

from varlex.domain import Box

ACCEPTANCE_LINES: dict = {}


@pytest.fixture
def unit1():
    return Box((0.5,), 0.5)


@pytest.fixture
def unit2():
    return Box((0.5, 0.5), 0.5)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
