import numpy as np
import pytest

from ptrigger.exitprob import ErrorProcessSpec, build_exit_table


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def scalar_table():
    # isotropic scalar process, coarse but quick
    spec = ErrorProcessSpec([[0.9]], [[0.1**2]], 0.05, 0.01)
    return build_exit_table(spec, grid_size=21, max_steps=4, samples=20000, seed=3)
