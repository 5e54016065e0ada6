"""Volumetric light-field encryption.

A volume is encoded into one 2D image through a simulated light-field
microscope whose lenslets carry a random mask. The bank of point-spread
functions of that system is the key; decryption is iterative deconvolution
with it.
"""

__version__ = "0.1.0"

from .config import MaskSpec, OpticalSystemConfig
from .errors import (ConfigurationError, KeyFormatError, LightFieldError, NumericalError,
                     SamplingError)
from .psf import (ComplexField, SamplingGrid, compute_point_psf, debye_field, lenslet_modulation,
                  propagate, random_mask, validate_sampling)
from .key import PsfKey, build_psf_key, load_key, perturb_key
from .forward import (LightFieldImage, LightFieldOperator, Volume, apply_adjoint, apply_forward,
                      dense_operator, encrypt, occlude)
from .inverse import DeconvSettings, decrypt
from .digitize import BinaryPlaneSet, digitize, reassemble
from .analysis import normalized_correlation, plane_correlations, run_attack_suite
from .scenes import make_scene

__all__ = [
    "MaskSpec", "OpticalSystemConfig",
    "ConfigurationError", "KeyFormatError", "LightFieldError", "NumericalError", "SamplingError",
    "ComplexField", "SamplingGrid", "compute_point_psf", "debye_field", "lenslet_modulation",
    "propagate", "random_mask", "validate_sampling",
    "PsfKey", "build_psf_key", "load_key", "perturb_key",
    "LightFieldImage", "LightFieldOperator", "Volume", "apply_adjoint", "apply_forward",
    "dense_operator", "encrypt", "occlude",
    "DeconvSettings", "decrypt",
    "BinaryPlaneSet", "digitize", "reassemble",
    "normalized_correlation", "plane_correlations", "run_attack_suite",
    "make_scene",
]
