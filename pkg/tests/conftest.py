import numpy as np
import pytest
from gmpy2 import mpq

ACCEPTANCE_LINES = []


def random_mu(rng, N, max_den=30):
    out = []
    for _ in range(N):
        den = int(rng.integers(2, max_den + 1))
        out.append(mpq(int(rng.integers(1, den)), den))
    return tuple(out)


@pytest.fixture
def rng():
    return np.random.default_rng(20260418)


@pytest.fixture
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
