import numpy as np
import pytest

from memtracker.model import desk_config, init_params, micro_config


@pytest.fixture(scope="session")
def desk_cfg():
    return desk_config()


@pytest.fixture(scope="session")
def desk_params(desk_cfg):
    return init_params(desk_cfg, seed=0)


@pytest.fixture(scope="session")
def micro_cfg():
    return micro_config()


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
