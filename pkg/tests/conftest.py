import numpy as np
import pytest

from cfskit.geometry import make_chart


@pytest.fixture(scope="session")
def charts():
    cache = {}

    def get(name):
        if name not in cache:
            cache[name] = make_chart(name)
        return cache[name]

    return get


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
