import numpy as np
import pytest

from orars.core import Dataset


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def monotone_dataset():
    r = np.random.default_rng(7)
    x = r.uniform(0, 1, 120)
    return Dataset("mono", x[:, None], x + r.normal(0, 0.05, 120))


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
