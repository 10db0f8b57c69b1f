import numpy as np
import pytest

from metastable.landscape import analyze_landscape
from metastable.potential import PotentialSpec, make_grid


@pytest.fixture(scope="session")
def dw():
    return PotentialSpec.double_well(gamma=1.0, bc="neumann")


@pytest.fixture(scope="session")
def dw_dirichlet():
    return PotentialSpec.double_well(gamma=1.0, bc="dirichlet")


@pytest.fixture(scope="session")
def landscape16(dw):
    grid = make_grid("neumann", 16)
    points, graph = analyze_landscape(dw, grid)
    return grid, points, graph


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_KEY = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_KEY] = {}


@pytest.fixture
def acceptance(request):
    """Record one verdict line per acceptance criterion."""
    results = request.config.stash[ACCEPTANCE_KEY]

    def record(number: int, title: str, passed: bool, detail: str):
        results[number] = (title, bool(passed), detail)
        print(f"criterion {number} {'PASS' if passed else 'FAIL'}: {title} | {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(ACCEPTANCE_KEY, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        title, passed, detail = results[number]
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {number}. {title}: {detail}")
