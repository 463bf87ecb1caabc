import functools
import sys
from pathlib import Path

import pytest

from curbflow import planner, solver
from curbflow.scenario import load_scenario

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"


@functools.lru_cache(maxsize=None)
def scenario(name: str, search: str = ""):
    sc = load_scenario(SCENARIOS / f"{name}.json")
    if search == "piecewise":
        sc = sc.with_search(planner.piecewise_model(sc))
    return sc


@functools.lru_cache(maxsize=None)
def solved(name: str, search: str, cls: str, mode: str):
    return solver.solve(scenario(name, search), cls, mode)


@pytest.fixture(scope="session")
def base():
    return scenario("base_theta050")


@pytest.fixture(scope="session")
def base25():
    return scenario("base_theta025")


@pytest.fixture(scope="session")
def base_pw():
    return scenario("base_theta050", "piecewise")


@pytest.fixture(scope="session")
def scenarios_dir():
    return SCENARIOS


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
