import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from risloc.validation import random_instance  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def instance(rng):
    """A conditioned 9-path, two-slot instance with 4x4 arrays."""
    return random_instance(rng, 9, n_antennas=4, n_slots=2)


_VERDICTS = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line; all lines are repeated in the terminal summary."""
    def record(number, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        _VERDICTS.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_VERDICTS, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
