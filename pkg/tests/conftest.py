import numpy as np
import pytest

from msk.fixtures import double_link, full_body, pendulum, standing_biped


@pytest.fixture(scope="session")
def pend():
    return pendulum()


@pytest.fixture(scope="session")
def pend_muscle():
    return pendulum(with_muscle=True)


@pytest.fixture(scope="session")
def dlink():
    return double_link()


@pytest.fixture(scope="session")
def body():
    return full_body()


@pytest.fixture(scope="session")
def biped():
    return standing_biped()


def random_state(pm, rng, scale=0.3):
    """A modest random (q, qdot) pair that stays clear of joint limits."""
    q = scale * rng.standard_normal(pm.n)
    qd = scale * rng.standard_normal(pm.n)
    return q, qd
