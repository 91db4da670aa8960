import numpy as np
import pytest

from cgat.dataio import Dataset, GenSpec, generate
from cgat.model import init_model


@pytest.fixture(scope="session")
def tiny_dataset() -> Dataset:
    """Small dataset for fast unit tests (not the acceptance defaults)."""
    return generate(GenSpec(n_classes=4, dim=8, n_train=60, n_database=120, n_query=20, seed=3))


@pytest.fixture()
def small_model():
    return init_model([8, 12, 8], seed=0)


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
