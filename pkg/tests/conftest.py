import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from ctpredict import SpectralModel, factorize  # noqa: E402

_CRITERIA = []


@pytest.fixture(scope="session")
def ou_model():
    return SpectralModel.closed_form("ou")


@pytest.fixture(scope="session")
def ou_factor(ou_model):
    return factorize(ou_model)


@pytest.fixture(scope="session")
def two_pole_model():
    return SpectralModel.closed_form("rational", a=(1.0, 0.5), b=(1.0, 3.0))


@pytest.fixture(scope="session")
def two_pole_factor(two_pole_model):
    return factorize(two_pole_model)


@pytest.fixture
def criterion():
    """Record a pass/fail line for the acceptance summary."""

    def record(number, title, passed, detail=""):
        line = f"criterion {number} [{'PASS' if passed else 'FAIL'}] {title}" + (f" :: {detail}" if detail else "")
        _CRITERIA.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)
