import numpy as np
import pytest

from qgles.field import Field, Grid
from qgles.operators import sine_mode


def random_dirichlet(grid: Grid, seed: int) -> Field:
    """White-noise interior values, zero ring."""
    rng = np.random.default_rng(seed)
    v = np.zeros(grid.shape)
    v[1:-1, 1:-1] = rng.standard_normal((grid.ny - 2, grid.nx - 2))
    return Field(grid, v)


def smooth_field(grid: Grid, seed: int, kmax: int = 5) -> Field:
    """Seeded superposition of low sine modes with decaying weights."""
    rng = np.random.default_rng(seed)
    v = np.zeros(grid.shape)
    for k1 in range(1, kmax + 1):
        for k2 in range(1, kmax + 1):
            v += rng.standard_normal() / (k1 * k1 + k2 * k2) * sine_mode(grid, k1, k2).values
    return Field(grid, v)


@pytest.fixture
def grid65():
    return Grid(65, 65)


@pytest.fixture
def grid129():
    return Grid(129, 129)
