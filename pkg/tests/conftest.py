import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def zipf_probs(k, s=1.0):
    w = 1.0 / np.arange(1, k + 1) ** s
    return w / w.sum()


# lines printed by the acceptance tests, repeated in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip("]"))):
            terminalreporter.write_line(line)
