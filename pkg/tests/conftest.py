import numpy as np
import pytest

from mcsnet.graph import Graph


def path(n, gid="p"):
    return Graph(gid, n, tuple((i, i + 1) for i in range(n - 1)))


def complete(n, gid="k"):
    return Graph(gid, n, tuple((i, j) for i in range(n) for j in range(i + 1, n)))


def star(leaves, gid="s"):
    return Graph(gid, leaves + 1, tuple((0, i) for i in range(1, leaves + 1)))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, shown in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
