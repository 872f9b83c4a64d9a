import time

import numpy as np
import pytest

from asr_fe2.config import profile_config
from asr_fe2.scenarios import run_meso_scenario

from asr_fe2.geometry import Phase, build_structured_mesh
from asr_fe2.materials import ElementStates, default_material_table
from asr_fe2.meso_solver import RveProblem


def pytest_addoption(parser):
    parser.addoption("--profile", action="store", default="desk", choices=("desk", "paper"),
                     help="paper enables the multi-hour paper-scale regression")


@pytest.fixture
def profile(request):
    return request.config.getoption("--profile")


@pytest.fixture
def table():
    return default_material_table(wc=1.0)


def homogeneous_rve(n=6, h=1.0, table=None, seed=0, **kw):
    """Square periodic RVE made of mortar only."""
    mesh = build_structured_mesh(n * h, n * h, h)
    phases = np.full(mesh.n_elements, Phase.MORTAR, dtype=np.int8)
    table = table or default_material_table(wc=h)
    states = ElementStates(phases, table, np.random.default_rng(seed))
    return RveProblem(mesh, phases, states, **kw)


@pytest.fixture
def rve():
    return homogeneous_rve()


# one line per acceptance criterion, echoed at the end of the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


# seeds (geometry, strength, sites) of the five desk-scale specimens
DESK_SEEDS = [(s, s + 100, s + 200) for s in range(1, 6)]


@pytest.fixture(scope="session")
def desk_runs():
    """Free and loaded desk-profile specimens for every seed, with the time spent."""
    start = time.perf_counter()
    out = {}
    for scenario in ("meso_free", "meso_loaded"):
        out[scenario] = [run_meso_scenario(profile_config(
            "desk", scenario=scenario, seed_geometry=g, seed_strength=k, seed_sites=s))
            for g, k, s in DESK_SEEDS]
    out["elapsed"] = time.perf_counter() - start
    return out
