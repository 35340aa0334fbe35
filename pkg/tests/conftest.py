import numpy as np
import pytest

from hwgmfem import PolygonalMesh


@pytest.fixture
def right_triangle():
    """Single cell (0,0), (1,0), (0,1)."""
    return PolygonalMesh([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], [[0, 1, 2]])


@pytest.fixture
def unit_square():
    return PolygonalMesh([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]], [[0, 1, 2, 3]])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one summary line per acceptance criterion, printed after the run
ACCEPTANCE = {}


def record_criterion(number, ok, detail):
    ACCEPTANCE[number] = (bool(ok), detail)


@pytest.fixture
def record():
    return record_criterion


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'} | {detail}")
