import numpy as np
import pytest

from capsroute import presets
from capsroute.capsnet import CapsNetModel
from capsroute.cnn import CnnModel
from capsroute.data import make_synth_dataset
from capsroute.rng import make_rng


@pytest.fixture
def rng():
    return make_rng(0, "tests")


@pytest.fixture
def tiny_capsnet64():
    """Float64 tiny capsule model, the gradient-check workhorse."""
    return CapsNetModel(presets.TINY, rng=make_rng(0, "init-capsnet"), dtype=np.float64)


@pytest.fixture
def tiny_cnn64():
    return CnnModel(presets.TINY_CNN, rng=make_rng(0, "init-cnn"), dtype=np.float64)


@pytest.fixture(scope="session")
def small_dataset():
    """12 synthetic samples (4 per class, 6 patients): train 8 / val 2 / test 2."""
    return make_synth_dataset(seed=7, n_per_class=4)
