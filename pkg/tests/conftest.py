from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from landaukit.fields import DistributionField, Trajectory, VelocityGrid
from landaukit.collision import regularization_for_grid
from landaukit.kernel import KernelModel
from landaukit.stepper import maxwellian

settings.register_profile(
    "landaukit",
    deadline=None,
    max_examples=60,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("landaukit")


def static_trajectory(grid: VelocityGrid, values: np.ndarray, count: int, interval: float) -> Trajectory:
    """Equal snapshots at ``0, interval, ...``; an equilibrium stays put under the stepper."""
    return Trajectory(tuple(DistributionField(grid, k * interval, values) for k in range(count)), interval)


@pytest.fixture(scope="session")
def grid16() -> VelocityGrid:
    return VelocityGrid(16, 4.0)


@pytest.fixture(scope="session")
def model16(grid16) -> KernelModel:
    return KernelModel(-3.0, 0.5, regularization_for_grid(grid16))


@pytest.fixture(scope="session")
def maxwell16(grid16) -> DistributionField:
    return DistributionField(grid16, 0.0, maxwellian(grid16))


@pytest.fixture(scope="session")
def maxwell_traj32() -> Trajectory:
    grid = VelocityGrid(32, 4.0)
    return static_trajectory(grid, maxwellian(grid), 11, 0.5)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)
