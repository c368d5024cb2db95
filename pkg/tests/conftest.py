import numpy as np
import pytest

from superradiance.cloud import AtomConfiguration, CloudGeometry, sample_cloud


@pytest.fixture
def small_cloud():
    """Eight atoms in a compact Gaussian cloud (strong coupling, distinct modes)."""
    return sample_cloud(CloudGeometry(0.02, 2.0, 2.0), 8, seed=11)


@pytest.fixture
def single_atom():
    return AtomConfiguration(np.zeros((1, 3)), seed=0)


def random_configuration(n, scale=2.0, seed=0):
    rng = np.random.default_rng(seed)
    return AtomConfiguration(rng.standard_normal((n, 3)) * scale, seed=seed)
