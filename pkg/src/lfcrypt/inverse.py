"""Decryption by multiplicative deconvolution with the PSF key.

Each iteration updates every voxel by the ratio of back-projected data to
back-projected model, ``g <- g * (H^T O) / (H^T H g)``. Starting from a
positive volume the iterates stay nonnegative.
"""

from dataclasses import dataclass
import json
import logging
import warnings

import numpy as np

from .errors import ConfigurationError
from .forward import LightFieldOperator, Volume
from .key import perturb_key  # noqa: F401  (re-exported: attacks live with decryption)

log = logging.getLogger(__name__)

INITIALIZATIONS = ("uniform_ones", "adjoint")


@dataclass(frozen=True)
class DeconvSettings:
    """Iteration controls.

    ``floor_epsilon`` is relative: the denominator is floored at
    ``floor_epsilon * max(H^T H g)``. ``mask_occluded=False`` feeds blocked
    pixels to the solver as measured zeros instead of ignoring them.
    """

    iterations: int = 8
    floor_epsilon: float = 1e-12
    threshold_fraction: float = 0.0
    initialization: str = "uniform_ones"
    mask_occluded: bool = True

    def __post_init__(self):
        if int(self.iterations) != self.iterations or self.iterations < 1:
            raise ConfigurationError(f"iterations must be a positive integer, got {self.iterations}")
        if not self.floor_epsilon > 0:
            raise ConfigurationError("floor_epsilon must be positive")
        if not (0 <= self.threshold_fraction < 1):
            raise ConfigurationError("threshold_fraction must be in [0, 1)")
        if self.initialization not in INITIALIZATIONS:
            raise ConfigurationError(f"initialization must be one of {INITIALIZATIONS}")


def decrypt(image, key, settings=None, volume_shape=None, lateral_origin=None, *, initial=None,
            operator=None, diagnostics=None, callback=None):
    """Reconstruct a volume from a light-field image.

    Parameters
    ----------
    image : LightFieldImage
    key : PsfKey
    settings : DeconvSettings, optional
    volume_shape : tuple, optional
        ``(nz, ny, nx)``; defaults to the key's planes over the image shape.
    initial : ndarray, optional
        Starting volume; overrides ``settings.initialization``.
    operator : LightFieldOperator, optional
        Reuse a prebuilt operator for the same key and geometry.
    diagnostics : file-like, optional
        Receives one JSON line per iteration (``iteration``, ``residual``,
        ``min``, ``max``).
    callback : callable, optional
        Called as ``callback(iteration, g)`` after every update.

    Returns
    -------
    Volume
    """
    settings = settings or DeconvSettings()
    O = image.values
    if not np.all(np.isfinite(O)):
        raise ConfigurationError("image contains non-finite values")
    if np.any(O < 0):
        raise ConfigurationError("image must be nonnegative")
    if operator is not None:
        volume_shape = operator.volume_shape
    elif volume_shape is None:
        volume_shape = (len(key.z_planes),) + image.shape
    op = operator or LightFieldOperator(key, volume_shape, image.shape, lateral_origin)
    mask = image.mask if settings.mask_occluded else None
    valid = np.ones(image.shape, bool) if mask is None else mask

    def result(values):
        return Volume(values, key.voxel_pitch, key.z_planes, lateral_origin)

    data = op.adjoint(O, mask)
    if not np.any(O[valid]):
        warnings.warn("light-field image has no signal; returning an empty volume", RuntimeWarning)
        return result(np.zeros(volume_shape))

    if initial is not None:
        g = np.array(initial, dtype=float)
        if g.shape != tuple(volume_shape) or np.any(g < 0):
            raise ConfigurationError("initial volume must be nonnegative with the operator's shape")
    elif settings.initialization == "adjoint":
        g = data / data.max()
        # zeros never recover under a multiplicative update
        g = np.maximum(g, settings.floor_epsilon)
    else:
        g = np.ones(volume_shape)

    model = op.forward(g)
    for it in range(1, settings.iterations + 1):
        denom = op.adjoint(model, mask)
        denom = np.maximum(denom, settings.floor_epsilon * denom.max())
        g = g * (data / denom)
        model = op.forward(g)
        if diagnostics is not None or log.isEnabledFor(logging.DEBUG):
            resid = float(np.sum((O - model)[valid] ** 2))
            rec = {"iteration": it, "residual": resid, "min": float(g.min()), "max": float(g.max())}
            if diagnostics is not None:
                diagnostics.write(json.dumps(rec) + "\n")
            log.debug("iteration %(iteration)d residual %(residual).6g", rec)
        if callback is not None:
            callback(it, g)

    if settings.threshold_fraction > 0:
        g = np.where(g >= settings.threshold_fraction * g.max(), g, 0.0)
    return result(g)


def data_residual(image, volume, operator, masked=True):
    """``||O - H g||^2`` over valid pixels."""
    model = operator.forward(volume.values if isinstance(volume, Volume) else volume)
    valid = image.valid() if masked else np.ones(image.shape, bool)
    return float(np.sum((image.values - model)[valid] ** 2))
