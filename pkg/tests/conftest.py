import numpy as np
import pytest

from robust_merton import (
    ExponentialUtility,
    LogUtility,
    PowerUtility,
    Scenario,
    UncertaintySchedule,
    make_cell,
    solve,
)

UTILITIES = {
    "log": LogUtility(),
    "power": PowerUtility(0.5),
    "exponential": ExponentialUtility(1.0),
}


def canonical_scenario(utility, r=0.0, x0=1.0):
    """d=1, drift box [0.05, 0.10], eigenvalues [0.04, 0.09], T=1."""
    cell = make_cell(0.0, 1.0, ([0.05], [0.10]), 0.04, 0.09)
    return Scenario(1, r, x0, utility, UncertaintySchedule((cell,)))


def three_cell_scenario(utility, x0=1.3):
    cells = (
        make_cell(0.0, 0.4, ([0.05], [0.10]), 0.04, 0.09),
        make_cell(0.4, 1.1, ([0.00], [0.03]), 0.02, 0.05),
        make_cell(1.1, 2.0, ([0.07], [0.12]), 0.03, 0.16),
    )
    return Scenario(1, 0.01, x0, utility, UncertaintySchedule(cells))


@pytest.fixture(params=list(UTILITIES), ids=list(UTILITIES))
def utility(request):
    return UTILITIES[request.param]


@pytest.fixture
def canonical(utility):
    return solve(canonical_scenario(utility))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
