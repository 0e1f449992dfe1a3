import numpy as np
import pytest

from dasdetect.datasets import make_feature_dataset


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_features():
    """Small FFT-100 corpus shared by the classifier tests."""
    return make_feature_dataset(150, 300, seed=7)


@pytest.fixture(scope="session")
def bench_models():
    """Classic model and CNN trained at the default bench settings."""
    from dasdetect.harness import BenchConfig, train_models

    return train_models(BenchConfig())
