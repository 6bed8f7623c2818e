import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from seqjde.bellman import CostCoefficients
from seqjde.discretization import Discretization
from seqjde.grid import GridSpec
from seqjde.models import AskModel, AskSpec, BinaryToyModel, ShiftInMeanModel, build_symmetric_spec

sys.path.insert(0, str(Path(__file__).parent))


def toy_grid(N: int) -> GridSpec:
    return GridSpec.from_bounds((0, N, N + 1))


@pytest.fixture(scope="session")
def toy_model():
    return BinaryToyModel()


@pytest.fixture(scope="session")
def toy_disc(toy_model):
    return Discretization(toy_model, toy_grid(toy_model.horizon))


@pytest.fixture(scope="session")
def toy_coeffs():
    return CostCoefficients([30.0, 30.0], [300.0, 300.0])


@pytest.fixture(scope="session")
def small_shift_disc():
    """Symmetric shift-in-mean on a coarse grid and a short horizon."""
    model = ShiftInMeanModel(replace(build_symmetric_spec(), horizon=12))
    return Discretization(model, GridSpec.from_bounds((-8, 8, 81)))


@pytest.fixture(scope="session")
def small_ask_model():
    return AskModel(AskSpec(horizon=6))


@pytest.fixture(scope="session")
def small_ask_disc(small_ask_model):
    return Discretization(small_ask_model, GridSpec.from_bounds((-6, 6, 25), (0, 12, 21)))


@pytest.fixture(scope="session")
def small_ask_folded(small_ask_model):
    return Discretization(small_ask_model, GridSpec.from_bounds((-6, 6, 25), (0, 12, 21)), fold=True)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)



def pytest_terminal_summary(terminalreporter):
    import acceptance_log

    if not acceptance_log.LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(acceptance_log.LINES):
        terminalreporter.write_line(acceptance_log.LINES[k])
