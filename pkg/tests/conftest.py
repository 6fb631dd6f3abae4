import numpy as np
import pytest

from wavecg.kernel import MemoryKernel, normalize, unit_exponential


@pytest.fixture(scope="session")
def unit_kernel() -> MemoryKernel:
    return unit_exponential()


@pytest.fixture(scope="session")
def two_mode_kernel() -> MemoryKernel:
    # mixture of a slow (b=0.8) and fast (b=3) relaxation, rescaled to unit g-mass
    return normalize([(1.0, 0.8), (2.0, 3.0)])


@pytest.fixture(scope="session")
def rng() -> np.random.Generator:
    return np.random.default_rng(20260809)
