import numpy as np
import pytest

from aheflow.bundle import exp_metric, identity_metric, mode_field
from aheflow.grid import TorusGeometry

CRITERIA = []


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for line in CRITERIA:
        terminalreporter.write_line(line)


@pytest.fixture
def criterion(capsys):
    """Print (and remember) one PASS/FAIL line per acceptance criterion."""

    def report(number, passed, summary, seconds=None):
        tail = "" if seconds is None else f" [{seconds:.1f} s]"
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {summary}{tail}"
        CRITERIA.append(line)
        with capsys.disabled():
            print("\n" + line)
        return passed

    return report


@pytest.fixture
def geo4():
    return TorusGeometry(4)


@pytest.fixture
def geo8():
    return TorusGeometry(8)


def line_metric(geometry, modes, beta=0.0):
    return exp_metric(geometry, mode_field(geometry, modes), beta)


def hermitian(a, b, c):
    """2x2 Hermitian matrix ``[[a, c], [conj c, b]]``."""
    return np.array([[a, c], [np.conj(c), b]], dtype=complex)


def rank2_metric(geometry, beta=0.0):
    X = mode_field(
        geometry,
        [
            ((1, 0, 0, 0), hermitian(0.2, -0.1, 0.05j), "cos"),
            ((0, 0, 1, 1), hermitian(0.1, 0.15, 0.08), "sin"),
        ],
        2,
    )
    return exp_metric(geometry, X, beta)


def two_mode_line_metric(geometry, beta=0.0):
    return line_metric(geometry, [((1, 0, 0, 0), 0.3, "cos"), ((0, 0, 1, 0), 0.25, "sin")], beta)


@pytest.fixture
def flat_line(geo8):
    return identity_metric(geo8, 1)
