import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from simplenet.tensor import make_rng  # noqa: E402


@pytest.fixture
def rng():
    return make_rng(1234)


@pytest.fixture
def nprng():
    return np.random.default_rng(99)


def pytest_terminal_summary(terminalreporter):
    from oracles import ACCEPTANCE

    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, detail in sorted(ACCEPTANCE, key=lambda row: row[0]):
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  criterion {number}: {title}: {detail}")
