import numpy as np
import pytest

from vidcorr import FeatureVolume, LatentVolume, normalize


def make_volume(shape, seed, normalized=True):
    """Random Gaussian volume; normalized unless told otherwise."""
    rng = np.random.default_rng(seed)
    data = rng.standard_normal(shape).astype(np.float32)
    vol = FeatureVolume(data)
    return normalize(vol) if normalized else vol


def make_latent(shape, seed, timestep=0):
    rng = np.random.default_rng(seed)
    return LatentVolume(rng.standard_normal(shape).astype(np.float32), timestep=timestep)


@pytest.fixture
def small_volume():
    return make_volume((3, 4, 4, 8), seed=42)
