import numpy as np
import pytest

from decumulation.economics import ModelParams
from decumulation.solver import SolveOptions, build_grid, solve


@pytest.fixture(scope="session")
def params():
    return ModelParams().validate()


@pytest.fixture(scope="session")
def small_grid(params):
    return build_grid(params.market, 2.0e6, 60)


@pytest.fixture(scope="session")
def small_solution(params, small_grid):
    return solve(params, small_grid, SolveOptions())


@pytest.fixture(scope="session")
def small_solution_mindd(params, small_grid):
    return solve(params, small_grid, SolveOptions(min_withdrawals=True), housing=False)


@pytest.fixture
def gen():
    return np.random.default_rng(20260115)


_ACCEPTANCE = {}


@pytest.fixture
def acceptance(capsys):
    """Record one PASS/FAIL line for an acceptance criterion."""

    def record(number, ok, detail, seconds):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}  [{seconds:.1f} s]"
        _ACCEPTANCE[number] = line
        with capsys.disabled():
            print("\n" + line)

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[number])
