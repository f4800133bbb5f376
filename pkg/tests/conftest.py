"""Shared fixtures.

Vortex solves and long flow runs are session scoped so the unit tests and the
acceptance suite share them.
"""

from __future__ import annotations

import numpy as np
import pytest

from ahgflow.lattice import FieldState, Grid
from ahgflow import flow, vortex

L_BOX = 16.0
CENTER = (L_BOX / 2, L_BOX / 2)

_ACCEPTANCE_LINES: list[str] = []


def record_line(line: str) -> None:
    print(line)
    _ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_fields(rng: np.random.Generator, n: int = 16, L: float = 16.0, noise: float = 0.3) -> FieldState:
    grid = Grid(n, L)
    phi = 1.0 + noise * (rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape))
    theta = noise * rng.standard_normal((2,) + grid.shape)
    return FieldState(grid=grid, phi=phi, theta=theta)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def random_state(rng):
    return random_fields(rng)


_VORTEX_CACHE: dict = {}


def vortex_solution(n: int, zeros=(CENTER,)) -> vortex.VortexSolution:
    key = (n, tuple(zeros))
    if key not in _VORTEX_CACHE:
        _VORTEX_CACHE[key] = vortex.solve_taubes(Grid(n, L_BOX), list(zeros), tol=1e-10)
    return _VORTEX_CACHE[key]


@pytest.fixture(scope="session")
def vortex64():
    return vortex_solution(64)


@pytest.fixture(scope="session")
def vortex128():
    return vortex_solution(128)


@pytest.fixture(scope="session")
def vortex256():
    return vortex_solution(256)


@pytest.fixture(scope="session")
def vortex128_n2():
    return vortex_solution(128, ((6.0, 8.0), (10.0, 8.0)))


PERTURB_SEED = 7
PERTURB_CORR = 4.0
PERTURB_AMP = 0.05
MAIN_T = 20.0
CHECKPOINT_TIMES = tuple(0.5 * k for k in range(41))


@pytest.fixture(scope="session")
def perturbed128(vortex128):
    return vortex.perturb(vortex128.state, PERTURB_AMP, PERTURB_CORR, PERTURB_SEED)


@pytest.fixture(scope="session")
def main_run(perturbed128):
    """Perturbed N=1 vortex flowed to ``T = 20`` at ``dt = 0.25 a^2 / 4``."""
    params = flow.FlowParams.from_factor(
        perturbed128.a,
        0.25,
        T=MAIN_T,
        output_every=64,
        checkpoint_times=CHECKPOINT_TIMES,
    )
    return flow.run_flow(perturbed128, params)
