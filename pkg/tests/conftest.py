import numpy as np
import pytest

from tatrec import SolveConfig, build_phantom, make_grid, make_medium, uniform_medium


@pytest.fixture(scope="session")
def grid101():
    return make_grid(101, 101, (-1.0, 1.0, -1.0, 1.0))


@pytest.fixture(scope="session")
def grid51():
    return make_grid(51, 51, (-1.0, 1.0, -1.0, 1.0))


@pytest.fixture(scope="session")
def medium101(grid101):
    return make_medium(grid101)


@pytest.fixture(scope="session")
def flat101(grid101):
    return uniform_medium(grid101)


@pytest.fixture(scope="session")
def phantom101(grid101):
    return build_phantom(grid101)


@pytest.fixture(scope="session")
def cfg_t3():
    return SolveConfig(T=3.0)


def gaussian_bump(grid, x0=0.0, y0=0.0, width=0.08):
    X, Y = grid.meshgrid()
    return np.exp(-((X - x0) ** 2 + (Y - y0) ** 2) / width)
