import os
from pathlib import Path

import numpy as np
import pytest

from wbnmpc.vehicle import nominal_params

ARTIFACTS = Path(__file__).parent / "_artifacts"


@pytest.fixture(scope="session")
def base():
    return nominal_params()


@pytest.fixture(scope="session")
def ode_library():
    from wbnmpc.scenarios.experiments import default_ode_library
    return default_ode_library()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def library_dir() -> Path:
    """Trained libraries live here; WBNMPC_LIBRARY points elsewhere."""
    return Path(os.environ.get("WBNMPC_LIBRARY", ARTIFACTS / "library"))


_CRITERIA: dict[int, str] = {}


@pytest.fixture(scope="session")
def criterion():
    """``criterion(n, ok, detail)`` records one acceptance line."""
    def record(n: int, ok: bool, detail: str) -> bool:
        _CRITERIA[n] = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(_CRITERIA[n])
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[n])
