"""Self-describing files for volumes and light-field images.

Both use the layout of the key file: a magic line, the header length, a
JSON header, then little-endian float64 values in C order. The header
carries everything needed to reload the object.
"""

import hashlib
import json
import os

import numpy as np

from .errors import ConfigurationError, KeyFormatError
from .forward import LightFieldImage, Volume

VOLUME_MAGIC = b"LFVOL1"
IMAGE_MAGIC = b"LFIMG1"


def _write(path, magic, header, values):
    data = np.ascontiguousarray(values, dtype="<f8").tobytes()
    header = dict(header, shape=list(values.shape), checksum=hashlib.sha256(data).hexdigest())
    blob = json.dumps(header, sort_keys=True).encode()
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(magic + b"\n" + str(len(blob)).encode() + b"\n" + blob + data)
    os.replace(tmp, path)


def _read(path, magic, what):
    try:
        with open(path, "rb") as fh:
            if fh.readline().rstrip(b"\n") != magic:
                raise KeyFormatError(f"{path}: not a {what} file")
            n = int(fh.readline())
            header = json.loads(fh.read(n))
            data = fh.read()
    except (ValueError, UnicodeDecodeError) as exc:
        raise KeyFormatError(f"{path}: malformed {what} header") from exc
    shape = tuple(header["shape"])
    if len(data) != 8 * int(np.prod(shape)):
        raise KeyFormatError(f"{path}: payload size does not match header")
    if hashlib.sha256(data).hexdigest() != header["checksum"]:
        raise KeyFormatError(f"{path}: checksum mismatch")
    return header, np.frombuffer(data, "<f8").reshape(shape).astype(float)


def save_volume(volume, path):
    header = {
        "lateral_pitch": volume.lateral_pitch,
        "axial_positions": list(volume.axial_positions),
        "lateral_origin": None if volume.lateral_origin is None else list(volume.lateral_origin),
    }
    _write(path, VOLUME_MAGIC, header, volume.values)


def load_volume(path):
    h, values = _read(path, VOLUME_MAGIC, "volume")
    origin = h.get("lateral_origin")
    return Volume(values, h["lateral_pitch"], h["axial_positions"], None if origin is None else tuple(origin))


def save_image(image, path):
    header = {
        "pixel_pitch": image.pixel_pitch,
        "metadata": image.metadata,
        "mask": None if image.mask is None else np.packbits(image.mask, axis=None).tobytes().hex(),
    }
    _write(path, IMAGE_MAGIC, header, image.values)


def load_image(path):
    h, values = _read(path, IMAGE_MAGIC, "image")
    mask = h.get("mask")
    if mask is not None:
        mask = np.unpackbits(np.frombuffer(bytes.fromhex(mask), np.uint8),
                             count=values.size).astype(bool).reshape(values.shape)
    return LightFieldImage(values, h["pixel_pitch"], mask, h.get("metadata", {}))


def load_mask(path, shape=None):
    """Occlusion mask from an image file: nonzero pixels are blocked."""
    from PIL import Image

    with Image.open(path) as im:
        blocked = np.asarray(im.convert("L")) > 0
    if shape is not None and blocked.shape != tuple(shape):
        raise ConfigurationError(f"mask shape {blocked.shape} differs from image shape {tuple(shape)}")
    return ~blocked


# --- image stacks -----------------------------------------------------------


def import_stack(paths, lateral_pitch, axial_positions):
    """Volume from one 8- or 16-bit grayscale image per plane, mapped to [0, 1].

    A single multi-page TIFF may be passed in place of the list.
    """
    from PIL import Image, ImageSequence

    if isinstance(paths, (str, os.PathLike)):
        paths = [paths]
    frames = []
    for p in paths:
        with Image.open(p) as im:
            for frame in ImageSequence.Iterator(im):
                a = np.asarray(frame)
                if a.ndim != 2:
                    raise ConfigurationError(f"{p}: only single-channel images are supported")
                if a.dtype == np.uint8:
                    full = 255.0
                elif a.dtype in (np.uint16, np.int32) or frame.mode.startswith("I"):
                    full = 65535.0
                else:
                    raise ConfigurationError(f"{p}: unsupported pixel type {a.dtype}")
                frames.append(np.clip(a.astype(float) / full, 0.0, 1.0))
    if len({f.shape for f in frames}) != 1:
        raise ConfigurationError("stack planes differ in shape")
    return Volume(np.stack(frames), lateral_pitch, axial_positions)


def export_png16(image, path):
    """16-bit PNG of an image scaled so its peak is 65535; returns the scale used."""
    from PIL import Image

    peak = float(image.values.max())
    scale = 65535.0 / peak if peak > 0 else 1.0
    counts = np.floor(image.values * scale + 0.5).astype(np.uint16)
    Image.fromarray(counts).save(path)
    return scale
