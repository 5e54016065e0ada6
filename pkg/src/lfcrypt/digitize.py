"""N-level binarization of light-field images into bit planes.

An image is scaled so its peak maps to ``2**N - 1``, rounded half up to
integers ``P`` and split into bits, ``P = sum_i a_i 2**i``. Plane ``i`` holds
bit ``a_i``. The peak is kept so that reassembly restores physical units.
"""

from dataclasses import dataclass, field
import hashlib
import json
import os

import numpy as np

from .errors import ConfigurationError, KeyFormatError
from .forward import LightFieldImage

MAGIC = b"LFBP1"
MAX_LEVELS = 52  # integers stay exact in float64


@dataclass
class BinaryPlaneSet:
    """Bit planes ``planes[i]`` (bit ``a_i``) of an ``n_levels``-bit image."""

    planes: np.ndarray
    n_levels: int
    peak: float
    pixel_pitch: float = None
    mask: np.ndarray = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.planes = np.asarray(self.planes)
        if self.planes.ndim != 3:
            raise ConfigurationError("bit planes must be a stack of 2D arrays (N, rows, cols)")
        if self.planes.dtype != bool:
            if not np.all((self.planes == 0) | (self.planes == 1)):
                raise ConfigurationError("bit planes must hold only 0 and 1")
            self.planes = self.planes.astype(bool)
        self.n_levels = int(self.n_levels)
        if self.n_levels != self.planes.shape[0]:
            raise ConfigurationError(
                f"{self.planes.shape[0]} planes given for an {self.n_levels}-bit set")
        _check_levels(self.n_levels)
        if not (np.isfinite(self.peak) and self.peak >= 0):
            raise ConfigurationError("peak must be finite and nonnegative")

    @property
    def shape(self):
        return self.planes.shape[1:]

    @property
    def full_scale(self):
        return 2 ** self.n_levels - 1

    def integers(self):
        """The integer image ``P`` rebuilt from the bits."""
        weights = (np.uint64(1) << np.arange(self.n_levels, dtype=np.uint64))
        return np.tensordot(weights, self.planes.astype(np.uint64), axes=1)


def _check_levels(n):
    if int(n) != n or not (1 <= n <= MAX_LEVELS):
        raise ConfigurationError(f"number of levels must be an integer in [1, {MAX_LEVELS}], got {n}")


def from_planes(planes, n_levels=None, peak=1.0, pixel_pitch=None):
    """Assemble a plane set from a list of 2D bit arrays, checking shapes."""
    planes = [np.asarray(p) for p in planes]
    if not planes:
        raise ConfigurationError("at least one bit plane is required")
    if any(p.shape != planes[0].shape or p.ndim != 2 for p in planes):
        raise ConfigurationError("bit planes differ in shape")
    return BinaryPlaneSet(np.stack(planes), n_levels or len(planes), peak, pixel_pitch)


def digitize(image, n_levels):
    """Split an image into ``n_levels`` bit planes.

    Parameters
    ----------
    image : LightFieldImage or 2D array
    n_levels : int
        Bit depth ``N``; the peak maps to ``2**N - 1``.

    Returns
    -------
    BinaryPlaneSet
    """
    _check_levels(n_levels)
    if isinstance(image, LightFieldImage):
        values, pitch, mask, meta = image.values, image.pixel_pitch, image.mask, image.metadata
    else:
        values, pitch, mask, meta = np.asarray(image, float), None, None, {}
    if values.ndim != 2:
        raise ConfigurationError("only 2D images can be digitized")
    if not np.all(np.isfinite(values)) or np.any(values < 0):
        raise ConfigurationError("image must be finite and nonnegative")
    peak = float(values.max())
    if peak <= 0:
        raise ConfigurationError("image is all zero; there is no peak to normalize by")
    top = 2 ** n_levels - 1
    P = np.floor(values / peak * top + 0.5)
    P = np.clip(P, 0, top).astype(np.uint64)
    bits = (P[None] >> np.arange(n_levels, dtype=np.uint64)[:, None, None]) & np.uint64(1)
    # reassembly restores the input units, so metadata such as a camera scale stays valid
    return BinaryPlaneSet(bits.astype(bool), n_levels, peak, pitch, mask, dict(meta))


def reassemble(planes):
    """Rebuild the image ``sum_i a_i 2**i`` rescaled by ``peak / (2**N - 1)``."""
    P = planes.integers().astype(float)
    values = P * (planes.peak / planes.full_scale)
    meta = dict(planes.metadata)
    meta["digitized_levels"] = planes.n_levels
    return LightFieldImage(values, planes.pixel_pitch or 0.0, planes.mask, meta)


# --- packed container -------------------------------------------------------


def _digest(packed):
    return hashlib.sha256(packed.tobytes()).hexdigest()


def save_planes(planes, path):
    """Write a packed 1-bit container: magic, header length, JSON header, bits."""
    packed = np.packbits(planes.planes, axis=None)
    header = {
        "shape": list(planes.shape),
        "n_levels": planes.n_levels,
        "peak": planes.peak,
        "pixel_pitch": planes.pixel_pitch,
        "checksum": _digest(packed),
        "mask": None if planes.mask is None else np.packbits(planes.mask, axis=None).tobytes().hex(),
        "metadata": planes.metadata,
    }
    blob = json.dumps(header, sort_keys=True).encode()
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(MAGIC + b"\n" + str(len(blob)).encode() + b"\n" + blob)
        fh.write(packed.tobytes())
    os.replace(tmp, path)


def load_planes(path):
    try:
        with open(path, "rb") as fh:
            if fh.readline().rstrip(b"\n") != MAGIC:
                raise KeyFormatError(f"{path}: not a bit-plane file")
            n = int(fh.readline())
            header = json.loads(fh.read(n))
            packed = np.frombuffer(fh.read(), np.uint8)
    except (ValueError, json.JSONDecodeError) as exc:
        raise KeyFormatError(f"{path}: malformed bit-plane header") from exc
    if _digest(packed) != header["checksum"]:
        raise KeyFormatError(f"{path}: checksum mismatch")
    shape = tuple(header["shape"])
    N = header["n_levels"]
    count = N * shape[0] * shape[1]
    bits = np.unpackbits(packed, count=count).astype(bool).reshape((N,) + shape)
    mask = header.get("mask")
    if mask is not None:
        mask = np.unpackbits(np.frombuffer(bytes.fromhex(mask), np.uint8),
                             count=shape[0] * shape[1]).astype(bool).reshape(shape)
    return BinaryPlaneSet(bits, N, header["peak"], header["pixel_pitch"], mask, header.get("metadata", {}))


# --- PNG export -------------------------------------------------------------


def export_png(planes, stem):
    """One black/white 8-bit PNG per plane (``<stem>_bit<i>.png``, values 0/255)."""
    from PIL import Image

    paths = []
    for i, plane in enumerate(planes.planes):
        p = f"{stem}_bit{i}.png"
        Image.fromarray(np.where(plane, 255, 0).astype(np.uint8)).save(p, optimize=False)
        paths.append(p)
    return paths


def import_png(paths, peak=1.0, pixel_pitch=None):
    """Read plane PNGs in bit order; pixels must be exactly 0 or 255."""
    from PIL import Image

    planes = []
    for p in paths:
        with Image.open(p) as im:
            a = np.asarray(im.convert("L"))
        if not np.all((a == 0) | (a == 255)):
            raise ConfigurationError(f"{p}: plane image has values other than 0 and 255")
        planes.append(a == 255)
    return from_planes(planes, len(planes), peak, pixel_pitch)
