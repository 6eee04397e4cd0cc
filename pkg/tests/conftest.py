import numpy as np
import pytest
from hypothesis import settings

from specal.spectra import SpectraSet, WavelengthAxis
from specal.synth import SynthConfig, generate

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture(scope="session")
def small_synth():
    """100-sample synthetic set (10 eggs x 10 days) on the full 331-point axis."""
    data, truth = generate(SynthConfig(n_eggs=10, n_days=10, seed=3))
    return data, truth


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_set(X, y=None, start=740.0):
    X = np.asarray(X, dtype=float)
    axis = WavelengthAxis(start + np.arange(X.shape[1], dtype=float))
    y = np.arange(X.shape[0], dtype=float) if y is None else np.asarray(y, dtype=float)
    return SpectraSet(axis, X, y, tuple(f"s{i}" for i in range(X.shape[0])))
