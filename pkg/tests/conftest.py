import pytest

from aclab.potential import make_quartic
from aclab.profile1d import solve_profile


@pytest.fixture(scope="session")
def quartic():
    return make_quartic()


@pytest.fixture(scope="session")
def profile(quartic):
    return solve_profile(quartic)


@pytest.fixture(scope="session")
def long_profile(quartic):
    # long enough for cutoff profiles down to eps = 0.025
    return solve_profile(quartic, T_max=30.0)
