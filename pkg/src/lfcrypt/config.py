"""Optical system and mask parameters.

Lengths are in meters throughout. Defaults reproduce the reference setup:
a 20x / 0.5 NA objective, a 150 um pitch / 3 mm focal-length microlens
array, 10 um mask and sensor pixels and 532 nm emission.
"""

from dataclasses import asdict, dataclass, fields, replace
import math

from .errors import ConfigurationError

MASK_KINDS = ("none", "random_phase", "random_amplitude")
AMPLITUDE_LAWS = ("bernoulli", "uniform")


def _ratio(a, b, what):
    """Return ``a / b`` as an int, or raise if it is not (close to) integral."""
    r = a / b
    n = int(round(r))
    if n < 1 or abs(r - n) > 1e-6 * max(1.0, r):
        raise ConfigurationError(f"{what} must be a positive integer, got {r:.6g}")
    return n


@dataclass(frozen=True)
class OpticalSystemConfig:
    na: float = 0.5
    magnification: float = 20.0
    refractive_index: float = 1.0
    wavelength: float = 532e-9
    lenslet_pitch: float = 150e-6
    lenslet_focal: float = 3e-3
    mask_pixel: float = 10e-6
    sensor_pixel: float = 10e-6
    psf_samples: int = 151
    # simulation samples per sensor pixel (odd, so bins stay centred)
    oversample: int = 1
    # largest |p3| accepted by the Debye evaluation
    max_defocus: float = 200e-6

    def __post_init__(self):
        self.validate()

    def validate(self):
        for name in ("magnification", "refractive_index", "wavelength", "lenslet_pitch",
                     "lenslet_focal", "mask_pixel", "sensor_pixel", "max_defocus"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ConfigurationError(f"{name} must be positive and finite, got {v!r}")
        if not (0 < self.na < self.refractive_index):
            raise ConfigurationError(
                f"na must lie in (0, refractive_index={self.refractive_index}), got {self.na}")
        if int(self.psf_samples) != self.psf_samples or self.psf_samples < 1 or self.psf_samples % 2 == 0:
            raise ConfigurationError(f"psf_samples must be a positive odd integer, got {self.psf_samples}")
        if int(self.oversample) != self.oversample or self.oversample < 1 or self.oversample % 2 == 0:
            raise ConfigurationError(f"oversample must be a positive odd integer, got {self.oversample}")
        if self.psf_samples % self.oversample:
            raise ConfigurationError("psf_samples must be a multiple of oversample")
        _ratio(self.lenslet_pitch, self.mask_pixel, "lenslet_pitch / mask_pixel")
        _ratio(self.lenslet_pitch, self.sensor_pixel, "lenslet_pitch / sensor_pixel")
        _ratio(self.mask_pixel, self.sim_interval, "mask_pixel / simulation interval")

    # derived quantities

    @property
    def alpha(self):
        """Object-side half aperture angle."""
        return math.asin(self.na / self.refractive_index)

    @property
    def wavenumber(self):
        return 2 * math.pi * self.refractive_index / self.wavelength

    @property
    def sim_interval(self):
        """Sample spacing of the simulated field at the lenslet plane."""
        return self.sensor_pixel / self.oversample

    @property
    def samples_per_lenslet(self):
        """Simulation samples across one lenslet."""
        return _ratio(self.lenslet_pitch, self.sim_interval, "lenslet_pitch / simulation interval")

    @property
    def pixels_per_lenslet(self):
        """Sensor pixels across one lenslet."""
        return _ratio(self.lenslet_pitch, self.sensor_pixel, "lenslet_pitch / sensor_pixel")

    @property
    def sensor_samples(self):
        """Side of a PSF window in sensor pixels."""
        return self.psf_samples // self.oversample

    @property
    def object_period(self):
        """Lenslet pitch referred to object space."""
        return self.lenslet_pitch / self.magnification

    def offsets_per_period(self, voxel_pitch):
        """Number of voxels across one lenslet period for a lateral voxel pitch."""
        return _ratio(self.object_period, voxel_pitch, "lenslet_pitch / (magnification * voxel pitch)")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigurationError(f"unknown optical parameters: {sorted(unknown)}")
        kw = {k: (int(v) if k in ("psf_samples", "oversample") else float(v)) for k, v in d.items()}
        return cls(**kw)

    def replace(self, **changes):
        return replace(self, **changes)


@dataclass(frozen=True)
class MaskSpec:
    """Random mask attached to the lenslet array, plus an optional sensor mask.

    ``sensor_seed`` enables the second amplitude mask in front of the sensor.
    ``mask_pixel`` of ``None`` means "use the optical config's mask pixel".
    """

    kind: str = "random_phase"
    seed: int = 0
    mask_pixel: float = None
    sensor_seed: int = None
    amplitude_law: str = "bernoulli"

    def __post_init__(self):
        if self.kind not in MASK_KINDS:
            raise ConfigurationError(f"unknown mask kind {self.kind!r}; expected one of {MASK_KINDS}")
        if self.amplitude_law not in AMPLITUDE_LAWS:
            raise ConfigurationError(
                f"unknown amplitude law {self.amplitude_law!r}; expected one of {AMPLITUDE_LAWS}")
        if self.mask_pixel is not None and not self.mask_pixel > 0:
            raise ConfigurationError("mask_pixel must be positive")

    def pixel(self, config):
        return config.mask_pixel if self.mask_pixel is None else self.mask_pixel

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for k in ("seed", "sensor_seed"):
            if d.get(k) is not None:
                d[k] = int(d[k])
        if d.get("mask_pixel") is not None:
            d["mask_pixel"] = float(d["mask_pixel"])
        return cls(**d)
