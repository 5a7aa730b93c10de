import numpy as np
import pytest

from demoscale.config import default_config
from demoscale.simenv import OracleProfile, oracle_demonstration


@pytest.fixture(scope="session")
def reach_config():
    return default_config(workdir="unused", task_kind="three_waypoints")


@pytest.fixture(scope="session")
def pick_config():
    return default_config(workdir="unused", task_kind="pick_and_place")


@pytest.fixture(scope="session")
def arm(reach_config):
    return reach_config.arm


@pytest.fixture(scope="session")
def reach_task(reach_config):
    return reach_config.task


@pytest.fixture(scope="session")
def pick_task(pick_config):
    return pick_config.task


@pytest.fixture(scope="session")
def oracle_profile():
    return OracleProfile(park_position=np.array([1.1, 0.2]))


@pytest.fixture(scope="session")
def reach_demo(reach_task, arm, oracle_profile):
    return oracle_demonstration(reach_task, arm, oracle_profile, seed=7)


@pytest.fixture(scope="session")
def pick_demo(pick_task, arm, oracle_profile):
    return oracle_demonstration(pick_task, arm, oracle_profile, seed=7)
