import numpy as np
import pytest

from bcslab.foundation import BoxGrid, build_radial_grid, gaussian_potential
from bcslab.tibcs import critical_temperature, solve_gap

MU = 1.0


@pytest.fixture(scope="session")
def well():
    return gaussian_potential(-5.0, 1.0)


@pytest.fixture(scope="session")
def no_field():
    return gaussian_potential(0.0, 1.0)


@pytest.fixture(scope="session")
def bump():
    return gaussian_potential(1.0, 1.0)


@pytest.fixture(scope="session")
def grid():
    return build_radial_grid(10.0, 128)


@pytest.fixture(scope="session")
def tc(well, grid):
    return critical_temperature(well, MU, grid)


@pytest.fixture(scope="session")
def gap_solution(well, grid, tc):
    solution = solve_gap(0.9 * tc, well, MU, grid, anderson=True, Tc=tc)
    assert solution.converged
    return solution


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(12345))


@pytest.fixture
def small_box():
    return BoxGrid(L=8.0, n=16, dims=1, h=0.2)
