import numpy as np
import pytest

from ranknas.data import DataConfig, generate_dataset, split_dataset
from ranknas.hparams import TrainHParams
from ranknas.space import builtin_space


@pytest.fixture
def micro():
    return builtin_space("micro")


@pytest.fixture
def small():
    return builtin_space("small")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_problem():
    """A few hundred samples, enough for fast end-to-end runs."""
    data = generate_dataset(3, 400, 8, 3, 0.3)
    return data, split_dataset(data, (0.4, 0.3, 0.3), 0)


@pytest.fixture(scope="session")
def tiny_hparams():
    return TrainHParams(width=8, batch_size=32, standalone_epochs=4)


@pytest.fixture(scope="session")
def default_data():
    return DataConfig().build()
