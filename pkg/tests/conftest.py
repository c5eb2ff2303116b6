import numpy as np
import pytest

from contagion_control import JointDistribution, build_zipf_copula


def make_rng(seed, *spawn):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=spawn)))


@pytest.fixture
def rng():
    return make_rng(12345)


@pytest.fixture
def quadratic_dist():
    """Single degree class (2, 2): 20% defaulted, 80% with two units of equity."""
    return JointDistribution({(2, 2, 0): 0.2, (2, 2, 2): 0.8})


@pytest.fixture
def one_regular_dist():
    """1-regular with a delta of initial defaults; cascades follow cycles."""
    return JointDistribution({(1, 1, 0): 0.25, (1, 1, 1): 0.75})


@pytest.fixture
def mixed_dist():
    """Mixed in/out degrees with balanced stub totals and invulnerable mass."""
    return JointDistribution({
        (2, 1, 1): 0.3,
        (1, 2, 1): 0.3,
        (1, 1, 0): 0.2,
        (2, 2, 2): 0.1,
        (1, 1, 5): 0.1,  # invulnerable
    })


@pytest.fixture(scope="session")
def experiment_dist():
    """The reproduced experiment's distribution: degrees 1..10, i = j."""
    return build_zipf_copula(0.5, 0.8, 0.7, 0.9, 10)
