"""Shared fixtures: links and reference metrics reused across the suite."""

import math

import numpy as np
import pytest

from conelab import entropy, geometry, link as linkmod


@pytest.fixture(scope="session")
def s3():
    return linkmod.sphere_link(3, 6)


@pytest.fixture(scope="session")
def s4_fine(s3):
    """Round unit S^4 suspension at the resolution used for the entropy checks."""
    return geometry.sphere_suspension(s3, 2000, radius=1.0, p=2.0)


@pytest.fixture(scope="session")
def s4_lambda(s4_fine):
    return entropy.compute_lambda(s4_fine)


@pytest.fixture(scope="session")
def hyperbolic_metric(s3):
    """b = sinh x cone over S^3: scal = -12, so lambda < 0 (expander side)."""
    grid = geometry.RadialGrid.graded(800, 1.5, p=2.0)
    return geometry.RadialMetric(link=s3, grid=grid, a=np.ones(grid.N),
                                 b=np.sinh(grid.x), gamma=2.0)


@pytest.fixture(scope="session")
def perturbed_metric(s3):
    """gamma = 2 perturbed flat cone used by the asymptotics checks."""
    grid = geometry.RadialGrid.graded(1500, 1.0, p=2.0)
    return geometry.perturbed_cone(s3, grid, amplitude=0.05, exponent=2.0,
                                   cutoff=0.7)


@pytest.fixture(scope="session")
def sphere_volume_exact():
    return 8.0 * math.pi**2 / 3.0
