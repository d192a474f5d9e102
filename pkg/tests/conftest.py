"""Shared fixtures: the expensive ground-state solves and spectral reports
are computed once per session and reused across the suite."""

import time

import pytest

from hartree_lab.ground_state import SolverConfig, solve_ground_state
from hartree_lab.linearized_spectrum import nondegeneracy_report
from hartree_lab.radial_core import DEFAULT_R_MAX, build_grid

DIMS = (3, 4, 5)
N_MAIN = 400


@pytest.fixture(scope="session")
def grids():
    return {n: build_grid(n, DEFAULT_R_MAX[n], N_MAIN) for n in DIMS}


@pytest.fixture(scope="session")
def ground_states(grids):
    """Fixed-point ground states at N=400 for n = 3, 4, 5, with solve times."""
    out = {}
    for n in DIMS:
        t0 = time.perf_counter()
        gs = solve_ground_state(
            grids[n], SolverConfig(method="fixed_point", tol=1e-10)
        )
        out[n] = (gs, time.perf_counter() - t0)
    return out


@pytest.fixture(scope="session")
def shooting_states(grids):
    """Shooting ground states at N=400, with solve times."""
    out = {}
    for n in DIMS:
        t0 = time.perf_counter()
        gs = solve_ground_state(grids[n], SolverConfig(method="shooting", tol=1e-7))
        out[n] = (gs, time.perf_counter() - t0)
    return out


@pytest.fixture(scope="session")
def gs3(ground_states):
    return ground_states[3][0]


@pytest.fixture(scope="session")
def gs3_shoot(shooting_states):
    return shooting_states[3][0]


@pytest.fixture(scope="session")
def reports(ground_states):
    """Nondegeneracy reports (k_max = 8) for all dimensions, with times."""
    out = {}
    for n in DIMS:
        t0 = time.perf_counter()
        rep = nondegeneracy_report(ground_states[n][0], 8)
        out[n] = (rep, time.perf_counter() - t0)
    return out
