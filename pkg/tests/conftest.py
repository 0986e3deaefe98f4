import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fomlb.instance import InstanceParams

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def c0():
    """Reference configuration: m1=2, m2=2 (m=12), dbar=5, eps=0.1, L_f=1, default beta."""
    return InstanceParams(eps=0.1, lf=1.0, m1=2, m2=2, dbar=5)


@pytest.fixture(scope="session")
def small():
    """m1=2, m2=1 (m=6), dbar=5."""
    return InstanceParams(eps=0.1, lf=1.0, m1=2, m2=1, dbar=5)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def sparse_blocks(rng, params, J, density=0.6, scale=1.0):
    """Random x whose blocks are supported in the first J coordinates."""
    mask = np.zeros((params.m, params.dbar), dtype=bool)
    mask[:, :J] = rng.random((params.m, J)) < density
    vals = rng.choice([-1.0, 1.0], size=mask.shape) * rng.uniform(0.3, 3.0, size=mask.shape) * scale
    return np.where(mask, vals, 0.0).ravel()
