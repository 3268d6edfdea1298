import numpy as np
import pytest

from dgmem.encoder import PatchEncoder
from dgmem.gridworld import GridEnv, make_four_rooms


@pytest.fixture(scope="session")
def four_rooms():
    return make_four_rooms(0)


@pytest.fixture()
def env(four_rooms):
    return GridEnv(four_rooms)


@pytest.fixture(scope="session")
def encoder():
    return PatchEncoder()


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
