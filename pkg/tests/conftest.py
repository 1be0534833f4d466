import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mixfujita import OperatorParams, SpectralGrid

settings.register_profile("pkg", max_examples=25, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("pkg")


@pytest.fixture
def grid64():
    return SpectralGrid(1, 10.0, 64)


@pytest.fixture
def params():
    return OperatorParams(1.0, 1.0, 0.5)


def cosine(grid, k_index):
    """cos(k x) for the ``k_index``-th lattice frequency, plus its wavenumber."""
    k = np.pi * k_index / grid.half_width
    x = grid.coords[0]
    return grid.field(np.cos(k * x)), k
