import time

import numpy as np
import pytest
from hypothesis import settings

from eqmeasure.energy import sample_field
from eqmeasure.geometry import Box, make_curve
from eqmeasure.kernel import ExternalField
from eqmeasure.obstacle import build_problem, psor_solve
from eqmeasure.solver_measure import SolverConfig, solve

settings.register_profile("repo", deadline=None, max_examples=25, derandomize=True)
settings.load_profile("repo")

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def quadratic():
    return ExternalField.quadratic()


@pytest.fixture(scope="session")
def circular_run(quadratic):
    t0 = time.perf_counter()
    res = solve(SolverConfig(a=0.0, box=Box.centered(2.0), h=0.05), None, quadratic)
    return res, time.perf_counter() - t0


@pytest.fixture(scope="session")
def semicircle_curve():
    return make_curve("segment", 401, start=(-2.0, 0.0), end=(2.0, 0.0))


@pytest.fixture(scope="session")
def semicircle_run(quadratic, semicircle_curve):
    return solve(SolverConfig(a=1.0, box=Box.centered(3.0), m=400), semicircle_curve, quadratic)


def mixed_curve(h):
    return make_curve("segment", 2 * int(round(2 / h)) + 1, start=(-1.0, 0.0), end=(1.0, 0.0))


@pytest.fixture(scope="session")
def mixed_runs(quadratic):
    """a = 0.5 on the segment (-1,0)-(1,0) at h = 0.2, 0.1, 0.05."""
    out = {}
    for h in (0.2, 0.1, 0.05):
        curve = mixed_curve(h)
        cfg = SolverConfig(a=0.5, box=Box.centered(2.0), h=h, m=int(round(4 / h)), curve_grading="cosine")
        out[h] = (curve, solve(cfg, curve, quadratic))
    return out


def cross_solve(curve, res, fld, box, hg):
    U = sample_field(res.measure, box, hg, near_field="exact")
    problem = build_problem(curve, res.constants, fld, box, hg, U)
    psor = psor_solve(problem, omega=1.9, tol=1e-10)
    return U, problem, psor


@pytest.fixture(scope="session")
def circular_cross(quadratic):
    """Coupled h = hg refinement of the a = 0 problem with its PSOR counterpart."""
    box = Box.centered(2.0)
    out = {}
    for h in (0.2, 0.1, 0.05):
        res = solve(SolverConfig(a=0.0, box=box, h=h), None, quadratic)
        out[h] = (res,) + cross_solve(None, res, quadratic, box, h)
    return out


@pytest.fixture(scope="session")
def mixed_cross(quadratic, mixed_runs):
    box = Box.centered(2.0)
    return {h: (curve, res) + cross_solve(curve, res, quadratic, box, h) for h, (curve, res) in mixed_runs.items()}


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
