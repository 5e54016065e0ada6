"""Flat ``key = value`` run configuration.

Every setting of a pipeline run lives in one text file, one assignment per
line, ``#`` starting a comment::

    optics.na = 0.5
    mask.kind = random_phase
    volume.lateral = 128
    decrypt.iterations = 8

``lfcrypt --print-defaults`` writes the full schema with the reference
values. Unknown keys are rejected.
"""

import configparser
from dataclasses import dataclass, field, fields
import math

from .config import MaskSpec, OpticalSystemConfig
from .errors import ConfigurationError
from .inverse import DeconvSettings
from .psf import require_sampling
from .scenes import axial_grid


@dataclass(frozen=True)
class VolumeGrid:
    """Voxel grid: ``lateral`` x ``lateral`` voxels on ``planes`` depths.

    ``z_list``, a comma-separated list of depths, replaces the uniform axial
    grid when set.
    """

    lateral: int = 128
    pitch: float = 0.25e-6
    planes: int = 26
    z_start: float = -60e-6
    z_step: float = 2e-6
    z_list: str = None

    def z_planes(self):
        if self.z_list:
            try:
                return tuple(float(v) for v in self.z_list.split(","))
            except ValueError:
                raise ConfigurationError(f"bad volume.z_list {self.z_list!r}") from None
        return axial_grid(self.z_start, self.z_step, self.planes)

    @property
    def shape(self):
        return (len(self.z_planes()), self.lateral, self.lateral)


_NULLABLE = ("mask_pixel", "sensor_seed", "z_list")


@dataclass(frozen=True)
class RunConfig:
    optics: OpticalSystemConfig = field(default_factory=OpticalSystemConfig)
    mask: MaskSpec = field(default_factory=lambda: MaskSpec(seed=1))
    volume: VolumeGrid = field(default_factory=VolumeGrid)
    decrypt: DeconvSettings = field(default_factory=DeconvSettings)
    # sensor side in pixels; 0 means "same as volume.lateral"
    sensor: int = 0

    def validate(self):
        """Fail fast: sampling gate, then grid commensurability."""
        o = self.optics
        require_sampling(o.lenslet_focal, o.sim_interval, o.psf_samples, o.wavelength)
        o.offsets_per_period(self.volume.pitch)
        if self.volume.lateral < 1 or self.volume.planes < 1 or self.sensor < 0:
            raise ConfigurationError("grid sizes must be positive")
        zs = self.volume.z_planes()
        if max(abs(z) for z in zs) > o.max_defocus:
            raise ConfigurationError(f"z-planes exceed max_defocus = {o.max_defocus:g} m")
        return self

    @property
    def sensor_shape(self):
        n = self.sensor or self.volume.lateral
        return (n, n)

    # --- flat text form ---------------------------------------------------

    def items(self):
        out = []
        for section, obj in (("optics", self.optics), ("mask", self.mask),
                             ("volume", self.volume), ("decrypt", self.decrypt)):
            for f in fields(obj):
                out.append((f"{section}.{f.name}", getattr(obj, f.name)))
        out.append(("sensor", self.sensor))
        return out

    def dumps(self):
        lines = ["# lfcrypt run configuration (lengths in meters)"]
        for k, v in self.items():
            lines.append(f"{k} = {'none' if v is None else _fmt(v)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_items(cls, pairs, base=None):
        """Apply ``(key, text value)`` overrides on top of ``base``."""
        base = base or cls()
        groups = {"optics": {}, "mask": {}, "volume": {}, "decrypt": {}}
        sensor = base.sensor
        defaults = dict(base.items())
        for key, text in pairs:
            key = key.strip()
            if key not in defaults:
                raise ConfigurationError(f"unknown configuration key {key!r}")
            value = _parse(text, defaults[key], key)
            if key == "sensor":
                sensor = value
            else:
                section, name = key.split(".", 1)
                groups[section][name] = value
        return cls(
            optics=_rebuild(base.optics, groups["optics"]),
            mask=_rebuild(base.mask, groups["mask"]),
            volume=_rebuild(base.volume, groups["volume"]),
            decrypt=_rebuild(base.decrypt, groups["decrypt"]),
            sensor=sensor,
        )

    @classmethod
    def loads(cls, text, base=None):
        parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
        parser.optionxform = str
        try:
            parser.read_string("[run]\n" + text)
        except configparser.Error as exc:
            raise ConfigurationError(f"malformed configuration: {exc}") from None
        return cls.from_items(parser.items("run"), base)

    @classmethod
    def load(cls, path, base=None):
        with open(path) as fh:
            return cls.loads(fh.read(), base)


def _rebuild(obj, changes):
    if not changes:
        return obj
    kw = {f.name: getattr(obj, f.name) for f in fields(obj)}
    kw.update(changes)
    return type(obj)(**kw)


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse(text, default, key):
    text = str(text).strip()
    if text.lower() in ("none", ""):
        if key.split(".")[-1] in _NULLABLE:
            return None
        raise ConfigurationError(f"{key} cannot be empty")
    try:
        if isinstance(default, bool):
            if text.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return text.lower() in ("true", "1", "yes")
        if isinstance(default, int) or key in ("mask.seed", "mask.sensor_seed"):
            v = float(text)
            if v != int(v):
                raise ValueError(text)
            return int(v)
        if isinstance(default, float) or key == "mask.mask_pixel":
            v = float(text)
            if not math.isfinite(v):
                raise ValueError(text)
            return v
    except ValueError:
        raise ConfigurationError(f"bad value for {key}: {text!r}") from None
    return text
