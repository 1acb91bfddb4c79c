import numpy as np
import pytest

from matkendall.tensor_io import MatrixSeries


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def small_series(rng):
    return MatrixSeries(rng.standard_normal((6, 4, 3)))


def random_orthogonal(rng, p):
    Q, R = np.linalg.qr(rng.standard_normal((p, p)))
    return Q * np.sign(np.diag(R))


ACCEPTANCE_LINES: list[str] = []


def record_criterion(number, name, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {name} -- {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
