import numpy as np
import pytest

from cabinsep.dsp import StftConfig
from cabinsep.model import ModelConfig, init_random


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# Small-bin configuration used for fast model tests: fft 64 -> 33 bins.
SMALL_BINS = 33


@pytest.fixture(scope="session")
def small_cfg():
    return ModelConfig(zones=4, bins=SMALL_BINS, n_full_sub=1, conformer_layers=2)


@pytest.fixture(scope="session")
def small_weights(small_cfg):
    return init_random(small_cfg, seed=7)


@pytest.fixture(scope="session")
def small_stft():
    return StftConfig(fft_size=64, window_length=64, hop=32)


def random_spectrogram(rng, zones=4, frames=10, bins=SMALL_BINS, scale=1.0):
    return scale * (rng.standard_normal((zones, frames, bins))
                    + 1j * rng.standard_normal((zones, frames, bins)))
