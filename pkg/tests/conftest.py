"""Shared solve fixtures; session-scoped because each one costs seconds."""

import numpy as np
import pytest

from tripodsim.dynamics import SystemParams
from tripodsim.propagation import GridSpec, solve_self_consistent
from tripodsim.pulses import PulseParams

SMALL_GRID = dict(n_xi=51, n_upsilon=1501)


@pytest.fixture(scope="session")
def small_solve():
    """Default physics on the coarse verification grid."""
    return solve_self_consistent(PulseParams(), SystemParams(), GridSpec(**SMALL_GRID))


@pytest.fixture(scope="session")
def damping_pair():
    """Exit traces of the same problem solved at damping 0.3 and 0.7."""
    traces = {}
    for y in (0.3, 0.7):
        grid = GridSpec(damping_y=y, max_iterations=2000, **SMALL_GRID)
        result = solve_self_consistent(PulseParams(), SystemParams(), grid)
        traces[y] = result.exit_intensity()
    return traces[0.3], traces[0.7]
