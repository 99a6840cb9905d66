import numpy as np
import pytest

from rfde_lyap.functionals import delay_feedback_functional, find_decay_rate
from rfde_lyap.system import uncertain_delay_feedback

# the stock stable parameter set used across the suite
A, B, R = 1.0, 1.1, 0.4


@pytest.fixture(scope="session")
def feedback_system():
    return uncertain_delay_feedback(A, B, R)


@pytest.fixture(scope="session")
def feedback_c():
    c = find_decay_rate(A, B, R)
    assert c is not None
    return c


@pytest.fixture(scope="session")
def feedback_functional(feedback_c):
    return delay_feedback_functional(A, B, R, feedback_c)


@pytest.fixture()
def rng():
    return np.random.default_rng(20240815)
