import numpy as np
import pytest

from devbind.modelfmt import synth_blobs, train_tiny
from devbind.modelfmt.experiments import device_key


@pytest.fixture(scope="session")
def small_task():
    ds = synth_blobs(classes=4, dims=8, per_class=60, seed=3, separation=1.5)
    train, test = ds.split(0.25, seed=4)
    model = train_tiny(train, [8, 12, 6, 4], epochs=15, seed=5)
    return train, test, model


@pytest.fixture(scope="session")
def key():
    return device_key(11)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
