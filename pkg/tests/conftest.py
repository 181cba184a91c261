"""
Shared fixtures
"""

import numpy as np
import pytest

from app.models.system import LinearDynamics, StageCost, TimeDomain


@pytest.fixture
def unstable_scalar():
    """x+ = 2x + u"""
    return LinearDynamics(A=[[2.0]], B=[[1.0]])


@pytest.fixture
def double_integrator():
    return LinearDynamics(A=[[1.0, 1.0], [0.0, 1.0]], B=[[0.5], [1.0]], C_y=[[1.0, 0.0]])


@pytest.fixture
def continuous_integrator():
    return LinearDynamics(A=[[0.0]], B=[[1.0]], domain=TimeDomain.CONTINUOUS)


@pytest.fixture
def identity_cost_2x1():
    return StageCost(Q=np.eye(2), R=[[1.0]], S=np.zeros((1, 2)))
