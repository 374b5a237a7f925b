import numpy as np
import pytest

from irs_noma_ddpg.channel import FadingConfig, SystemDims, sample_realization


def _shape(size):
    if size is None:
        return ()
    return (size,) if isinstance(size, int) else tuple(size)


class FakeRng:
    """Generator stand-in with scripted draws, for pinning channel samples.

    Each queued entry is either a scalar (broadcast to the requested
    shape) or an array reshaped to it.
    """

    def __init__(self, normals=(), uniforms=()):
        self.normals = list(normals)
        self.uniforms = list(uniforms)

    def _pop(self, queue, size):
        value = queue.pop(0)
        if np.isscalar(value):
            return np.full(_shape(size), value, dtype=float)
        return np.asarray(value, dtype=float).reshape(_shape(size))

    def standard_normal(self, size=None):
        return self._pop(self.normals, size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._pop(self.uniforms, size)


@pytest.fixture
def fake_rng_cls():
    return FakeRng


def make_realization(dims: SystemDims, seed: int, cfg: FadingConfig | None = None):
    return sample_realization(dims, cfg or FadingConfig(), np.random.default_rng(seed))


@pytest.fixture
def small_realization():
    return make_realization(SystemDims(M=2, N=4, K=2), seed=11)
