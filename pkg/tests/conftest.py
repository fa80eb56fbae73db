import os
from pathlib import Path

import numpy as np
import pytest

from mttinar.model import ModelSpec, make_rng, simulate

A1 = ModelSpec(0.4, 0.2, 3.0, 4, 0)
B3 = ModelSpec(0.3, 0.6, 5.0, 7, 1)


def crime_path():
    """Location of the 144-month criminal mischief series, if one was supplied."""
    env = os.environ.get("MTTINAR_CRIME_DATA")
    if env and Path(env).exists():
        return Path(env)
    local = Path(__file__).parent / "data" / "crime.csv"
    return local if local.exists() else None


@pytest.fixture
def a1():
    return A1


@pytest.fixture
def b3():
    return B3


@pytest.fixture(scope="session")
def a1_series_800():
    return simulate(A1, 800, make_rng(20240601))


@pytest.fixture(scope="session")
def a1_series_200():
    return simulate(A1, 200, make_rng(7))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for k in sorted(results):
            terminalreporter.write_line(results[k])
