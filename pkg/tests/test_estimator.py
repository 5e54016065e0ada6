import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from lfcrypt import OpticalSystemConfig
from lfcrypt.errors import ConfigurationError
from lfcrypt.estimator import LightFieldEncryptor

from conftest import TINY_OPTICS, TINY_PITCH, TINY_Z


@pytest.fixture(scope="module")
def est():
    return LightFieldEncryptor(OpticalSystemConfig(**TINY_OPTICS), seed=3, lateral=4, voxel_pitch=TINY_PITCH,
                               z_planes=TINY_Z, sensor=8, iterations=40).fit()


def test_params_and_clone(est):
    p = est.get_params()
    assert p["seed"] == 3 and p["lateral"] == 4
    c = clone(est)
    assert not hasattr(c, "key_") and c.get_params()["sensor"] == 8


def test_transform_matches_operator(est, rng):
    X = rng.random((3, 32))
    Y = est.transform(X)
    assert Y.shape == (3, 64)
    assert np.allclose(Y[1], est.operator_.forward(X[1].reshape(2, 4, 4)).ravel())


def test_inverse_transform_recovers_volume(est, rng):
    X = np.zeros((1, 32))
    X[0, 9] = 1.0
    rec = est.inverse_transform(est.transform(X))
    assert rec.shape == (1, 32) and rec[0].argmax() == 9


def test_fit_transform_and_checks(est, rng):
    X = rng.random((2, 32))
    Y = clone(est).fit_transform(X)
    assert np.allclose(Y, est.transform(X))
    with pytest.raises(ConfigurationError):
        est.transform(rng.random((2, 31)))
    with pytest.raises(ConfigurationError):
        est.transform(-np.ones((1, 32)))
    with pytest.raises(NotFittedError):
        clone(est).transform(X)


def test_same_seed_same_key(est):
    other = clone(est).fit()
    assert other.key_.checksum == est.key_.checksum
    assert est.volume(np.zeros(32)).shape == (2, 4, 4)
