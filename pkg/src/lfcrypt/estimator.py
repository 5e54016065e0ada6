"""scikit-learn style wrapper around key generation, encryption and decryption.

``fit`` builds the PSF key, ``transform`` encrypts flattened volumes into
flattened light-field images and ``inverse_transform`` decrypts them.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .config import MaskSpec, OpticalSystemConfig
from .errors import ConfigurationError
from .forward import LightFieldImage, LightFieldOperator, Volume
from .inverse import DeconvSettings, decrypt
from .key import build_psf_key


class LightFieldEncryptor(TransformerMixin, BaseEstimator):
    """Encrypt volumes into single light-field images.

    Parameters
    ----------
    optics : OpticalSystemConfig, optional
        Defaults to the reference microscope.
    mask_kind : {"random_phase", "random_amplitude", "none"}
    seed : int
        Mask seed; together with the optics it determines the key.
    lateral : int
        Volume side in voxels.
    voxel_pitch : float
        Lateral voxel pitch in meters.
    z_planes : sequence of float, optional
        Axial positions; default three planes at -60, -34 and -10 um.
    sensor : int, optional
        Sensor side in pixels; defaults to ``lateral``.
    iterations : int
        Deconvolution iterations used by :meth:`inverse_transform`.

    Attributes
    ----------
    key_ : PsfKey
    operator_ : LightFieldOperator
    n_features_in_ : int
        Voxels per volume.
    """

    def __init__(self, optics=None, mask_kind="random_phase", seed=0, lateral=64, voxel_pitch=0.5e-6,
                 z_planes=None, sensor=None, iterations=30):
        self.optics = optics
        self.mask_kind = mask_kind
        self.seed = seed
        self.lateral = lateral
        self.voxel_pitch = voxel_pitch
        self.z_planes = z_planes
        self.sensor = sensor
        self.iterations = iterations

    def _z(self):
        return tuple(self.z_planes) if self.z_planes is not None else (-60e-6, -34e-6, -10e-6)

    def fit(self, X=None, y=None):
        """Build the key. ``X`` is accepted for API compatibility and only shape-checked."""
        optics = self.optics or OpticalSystemConfig()
        zs = self._z()
        self.volume_shape_ = (len(zs), self.lateral, self.lateral)
        n = self.sensor or self.lateral
        self.sensor_shape_ = (n, n)
        self.n_features_in_ = int(np.prod(self.volume_shape_))
        if X is not None:
            self._check_volumes(X)
        self.key_ = build_psf_key(optics, MaskSpec(self.mask_kind, self.seed), zs, self.voxel_pitch)
        self.operator_ = LightFieldOperator(self.key_, self.volume_shape_, self.sensor_shape_)
        return self

    def _check_volumes(self, X):
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ConfigurationError(f"expected {self.n_features_in_} voxels per row, got {X.shape[1]}")
        if np.any(X < 0):
            raise ConfigurationError("volumes must be nonnegative")
        return X

    def transform(self, X):
        """Rows of flattened ``(z, y, x)`` volumes -> rows of flattened images."""
        check_is_fitted(self, "key_")
        X = self._check_volumes(X)
        return np.stack([self.operator_.forward(x.reshape(self.volume_shape_)).ravel() for x in X])

    def inverse_transform(self, X):
        """Rows of flattened images -> rows of reconstructed volumes."""
        check_is_fitted(self, "key_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != int(np.prod(self.sensor_shape_)):
            raise ConfigurationError(f"expected {np.prod(self.sensor_shape_)} pixels per row, got {X.shape[1]}")
        settings = DeconvSettings(iterations=self.iterations)
        pitch = self.key_.config.sensor_pixel
        out = []
        for row in X:
            img = LightFieldImage(row.reshape(self.sensor_shape_), pitch)
            out.append(decrypt(img, self.key_, settings, operator=self.operator_).values.ravel())
        return np.stack(out)

    def volume(self, row):
        """Wrap one flattened row as a :class:`Volume`."""
        check_is_fitted(self, "key_")
        return Volume(np.asarray(row, float).reshape(self.volume_shape_), self.voxel_pitch, self._z())
