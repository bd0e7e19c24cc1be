import numpy as np
import pytest

from lcmflow.imagecore import Image
from lcmflow.synth import noise_texture


def textured(height, width, seed=0):
    return Image(noise_texture(height, width, seed))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tex128():
    return textured(128, 128, 7)


@pytest.fixture(scope="session")
def tex32():
    return textured(32, 32, 3)
