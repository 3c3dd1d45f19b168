import numpy as np
import pytest

from iontrap.model import GridSpec, IonTrapParams

ACCEPTANCE = {}


def record_criterion(number, passed, detail):
    ACCEPTANCE[number] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")


@pytest.fixture
def fig2a():
    return IonTrapParams(m=80000.0, omega=0.0005, delta=0.02514, lam=0.05, k=0.2, phi=1.07249074)


@pytest.fixture
def fig3():
    return IonTrapParams(m=80000.0, omega=0.0005, delta=0.02514 / 5, lam=0.05, k=0.2, phi=1.07249074)


@pytest.fixture
def fig5():
    return IonTrapParams(m=80000.0, omega=0.0005, delta=0.005025343787836, lam=0.064727653164347,
                         k=0.2, phi=1.07244080531656)


@pytest.fixture
def grid2048():
    return GridSpec(-9.0, 9.0, 2048)


@pytest.fixture
def small_grid():
    return GridSpec(-6.0, 6.0, 64)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
