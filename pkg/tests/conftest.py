import os
import sys

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

from fairfed.core import Dataset, RngStream  # noqa: E402
from fairfed.datagen import SyntheticSpec  # noqa: E402


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def report():
    """report(k, ok, detail): record and print one pass/fail line for criterion k."""
    def emit(k, ok, detail):
        line = f"criterion {k}: {'PASS' if ok else 'FAIL'} {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return emit


@pytest.fixture
def spec():
    return SyntheticSpec()


@pytest.fixture
def synth(spec):
    def make(n, seed=0):
        return spec.sample(n, RngStream(seed).child("fixture"))
    return make


@pytest.fixture
def tiny():
    x = np.array([[0.2, 0.3], [0.9, 0.1], [0.5, 0.5], [0.1, 0.8]])
    return Dataset(x, [1, 0, 0, 1], [0, 1, 1, 1])
