"""Forward light-field model ``O = H g`` and its adjoint.

Voxel ``(iy, ix)`` belongs to lenslet ``(Ly, Lx)`` and sub-period offset
``(sy, sx)``. Its image is the key PSF for ``(z, sy, sx)`` with the window
centre placed on the sensor pixel under lenslet ``(Ly, Lx)``. Sensor pixel
``j`` sits at ``(j - S // 2) * sensor_pixel`` from the on-axis lenslet
centre, so lenslet ``L`` is centred on pixel ``S // 2 + L * K`` with ``K``
pixels per lenslet. PSF pixels that fall off the sensor are dropped.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from . import _rng
from .errors import ConfigurationError

DENSE_CAP = 2 ** 24


@dataclass
class Volume:
    """Nonnegative voxel intensities ``values[z, y, x]``.

    ``lateral_origin`` is the object-space ``(x, y)`` of voxel ``(0, 0)``;
    ``None`` centres the volume on the on-axis lenslet.
    """

    values: np.ndarray
    lateral_pitch: float
    axial_positions: tuple
    lateral_origin: tuple = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.axial_positions = tuple(float(z) for z in self.axial_positions)
        if self.values.ndim != 3:
            raise ConfigurationError(f"volume must be 3D (z, y, x), got shape {self.values.shape}")
        if len(self.axial_positions) != self.values.shape[0]:
            raise ConfigurationError("one axial position is required per volume plane")
        if np.any(np.diff(self.axial_positions) <= 0):
            raise ConfigurationError("axial positions must be strictly increasing")
        if not np.all(np.isfinite(self.values)) or np.any(self.values < 0):
            raise ConfigurationError("volume values must be finite and nonnegative")
        if not self.lateral_pitch > 0:
            raise ConfigurationError("lateral pitch must be positive")

    @property
    def shape(self):
        return self.values.shape

    def with_values(self, values):
        return replace(self, values=values)


@dataclass
class LightFieldImage:
    """Sensor image; ``mask`` marks valid pixels (``False`` = occluded)."""

    values: np.ndarray
    pixel_pitch: float
    mask: np.ndarray = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise ConfigurationError(f"image must be 2D, got shape {self.values.shape}")
        if self.mask is not None:
            self.mask = np.asarray(self.mask, dtype=bool)
            if self.mask.shape != self.values.shape:
                raise ConfigurationError("occlusion mask shape differs from image shape")

    @property
    def shape(self):
        return self.values.shape

    def valid(self):
        return np.ones(self.shape, bool) if self.mask is None else self.mask

    def rescaled(self):
        """Values divided by any recorded quantization scale."""
        return self.values / self.metadata.get("scale", 1.0)


# --- geometry ---------------------------------------------------------------


def lenslet_indices(n, n_offsets, first=None):
    """Lenslet and sub-period offset index of each of ``n`` voxels along an axis.

    ``first`` is the voxel-0 position in units of the voxel pitch, counted
    from the lenslet-centred offset lattice; the default centres the axis.
    """
    P = n_offsets
    q0 = -(n // 2) + P // 2 if first is None else first
    q = q0 + np.arange(n)
    return q // P, q % P


def _first_index(origin, pitch, P):
    if origin is None:
        return None
    q = origin / pitch + (P - 1) / 2
    if abs(q - round(q)) > 1e-6:
        raise ConfigurationError("volume lateral origin is not on the key's voxel lattice")
    return int(round(q))


def default_origin(n, P, pitch):
    """Object-space position of voxel 0 for the centred layout."""
    return (-(n // 2) + P // 2 - (P - 1) / 2) * pitch


class LightFieldOperator:
    """Matrix-free ``H`` for one key and one volume/sensor geometry.

    Parameters
    ----------
    key : PsfKey
    volume_shape : tuple ``(nz, ny, nx)``
    sensor_shape : tuple ``(Sy, Sx)``, optional
        Defaults to the lateral volume shape.
    lateral_origin : tuple, optional
        Object-space ``(x, y)`` of voxel ``(0, 0)``.
    cache_bytes : int
        PSF stacks are kept in memory when they fit in this budget;
        otherwise they are re-read from the key on every application.
    """

    def __init__(self, key, volume_shape, sensor_shape=None, lateral_origin=None,
                 cache_bytes=2 ** 30):
        nz, ny, nx = volume_shape
        if nz != len(key.z_planes):
            raise ConfigurationError(
                f"volume has {nz} planes but the key has {len(key.z_planes)}")
        self.key = key
        self.volume_shape = (nz, ny, nx)
        self.sensor_shape = tuple(sensor_shape) if sensor_shape is not None else (ny, nx)
        P = key.n_offsets
        K = key.config.pixels_per_lenslet
        ns = key.config.sensor_samples
        h = ns // 2
        self.P, self.K, self.ns = P, K, ns
        origin = lateral_origin or (None, None)
        axes = []
        for n, S, o in ((ny, self.sensor_shape[0], origin[1]), (nx, self.sensor_shape[1], origin[0])):
            L, s = lenslet_indices(n, P, _first_index(o, key.voxel_pitch, P))
            Lu, li = np.unique(L, return_inverse=True)
            top = S // 2 + Lu * K - h                     # sensor row of window row 0
            m_lo = max(0, int((-top).min()))              # window rows that can land on the sensor
            m_hi = min(ns, int((S - top).max()))
            if m_hi <= m_lo:
                raise ConfigurationError("no PSF pixel of this volume reaches the sensor")
            start = top + m_lo
            c_lo = min(0, int(start.min()))
            c_hi = max(S, int(start.max()) + m_hi - m_lo)
            axes.append(dict(L=L, s=s, li=li, nL=len(Lu), start=start - c_lo, m=(m_lo, m_hi),
                             canvas=(c_lo, c_hi), S=S))
        self._ay, self._ax = axes
        self._w = (self._ay["m"][1] - self._ay["m"][0], self._ax["m"][1] - self._ax["m"][0])
        need = nz * P * P * self._w[0] * self._w[1] * 8
        self._cache = {} if need <= cache_bytes else None

    @property
    def shape(self):
        """``(n_pixels, n_voxels)`` of the equivalent matrix."""
        return (int(np.prod(self.sensor_shape)), int(np.prod(self.volume_shape)))

    def _stack(self, iz):
        if self._cache is not None and iz in self._cache:
            return self._cache[iz]
        (ylo, yhi), (xlo, xhi) = self._ay["m"], self._ax["m"]
        plane = self.key.plane(iz)[:, :, ylo:yhi, xlo:xhi]
        stack = np.ascontiguousarray(plane).reshape(self.P * self.P, -1)
        if self._cache is not None:
            self._cache[iz] = stack
        return stack

    def _canvas(self):
        ay, ax = self._ay, self._ax
        return np.zeros((ay["canvas"][1] - ay["canvas"][0], ax["canvas"][1] - ax["canvas"][0]))

    def _sensor_view(self, canvas):
        ay, ax = self._ay, self._ax
        oy, ox = -ay["canvas"][0], -ax["canvas"][0]
        return canvas[oy:oy + ay["S"], ox:ox + ax["S"]]

    def _class_index(self):
        ay, ax = self._ay, self._ax
        return (ay["li"][:, None], ax["li"][None, :], ay["s"][:, None], ax["s"][None, :])

    def forward(self, g):
        """Sensor image ``H g`` for a ``(nz, ny, nx)`` array."""
        g = np.asarray(g, dtype=float)
        if g.shape != self.volume_shape:
            raise ConfigurationError(f"volume shape {g.shape} != operator shape {self.volume_shape}")
        ay, ax = self._ay, self._ax
        wy, wx = self._w
        P = self.P
        canvas = self._canvas()
        idx = self._class_index()
        for iz in range(g.shape[0]):
            if not g[iz].any():
                continue
            G = np.zeros((ay["nL"], ax["nL"], P, P))
            G[idx] = g[iz]
            tiles = (G.reshape(-1, P * P) @ self._stack(iz)).reshape(ay["nL"], ax["nL"], wy, wx)
            for a in range(ay["nL"]):
                r = ay["start"][a]
                for b in range(ax["nL"]):
                    c = ax["start"][b]
                    canvas[r:r + wy, c:c + wx] += tiles[a, b]
        return self._sensor_view(canvas).copy()

    def adjoint(self, image, mask=None):
        """``H^T`` applied to a sensor array; pixels with ``mask == False`` are ignored."""
        image = np.asarray(image, dtype=float)
        if image.shape != self.sensor_shape:
            raise ConfigurationError(f"image shape {image.shape} != sensor shape {self.sensor_shape}")
        if mask is not None:
            image = np.where(mask, image, 0.0)
        ay, ax = self._ay, self._ax
        wy, wx = self._w
        P = self.P
        canvas = self._canvas()
        self._sensor_view(canvas)[...] = image
        patches = np.empty((ay["nL"], ax["nL"], wy, wx))
        for a in range(ay["nL"]):
            r = ay["start"][a]
            for b in range(ax["nL"]):
                c = ax["start"][b]
                patches[a, b] = canvas[r:r + wy, c:c + wx]
        patches = patches.reshape(ay["nL"] * ax["nL"], -1)
        out = np.empty(self.volume_shape)
        idx = self._class_index()
        for iz in range(out.shape[0]):
            R = (patches @ self._stack(iz).T).reshape(ay["nL"], ax["nL"], P, P)
            out[iz] = R[idx]
        return out

    def normal(self, g, mask=None):
        """``H^T H g`` with masked pixels removed."""
        return self.adjoint(self.forward(g), mask)


def _operator_for(volume, key, sensor_shape=None):
    if volume.lateral_pitch != key.voxel_pitch and not np.isclose(volume.lateral_pitch, key.voxel_pitch,
                                                                    rtol=1e-9, atol=0):
        raise ConfigurationError(
            f"volume lateral pitch {volume.lateral_pitch} != key voxel pitch {key.voxel_pitch}")
    if (len(volume.axial_positions) != len(key.z_planes)
            or not np.allclose(volume.axial_positions, key.z_planes, rtol=0, atol=1e-12)):
        raise ConfigurationError("volume axial positions do not match the key's z-planes")
    return LightFieldOperator(key, volume.shape, sensor_shape, volume.lateral_origin)


def apply_forward(volume, key, sensor_shape=None, operator=None):
    """Light-field image of ``volume`` through the system described by ``key``."""
    op = operator or _operator_for(volume, key, sensor_shape)
    return LightFieldImage(op.forward(volume.values), key.config.sensor_pixel)


def apply_adjoint(image, key, volume_like, operator=None):
    """``H^T O`` as a :class:`Volume` on the grid of ``volume_like``."""
    op = operator or _operator_for(volume_like, key, image.shape)
    return volume_like.with_values(op.adjoint(image.values, image.mask))


def dense_operator(key, volume_shape, sensor_shape=None, lateral_origin=None, cap=DENSE_CAP):
    """Explicit ``(n_pixels, n_voxels)`` matrix, built voxel by voxel.

    This is the reference for the matrix-free operator and shares none of its
    indexing code paths. Refuses when the matrix would exceed ``cap`` entries.
    """
    nz, ny, nx = volume_shape
    Sy, Sx = sensor_shape if sensor_shape is not None else (ny, nx)
    n_entries = Sy * Sx * nz * ny * nx
    if n_entries > cap:
        raise ConfigurationError(f"dense operator needs {n_entries} entries, cap is {cap}; "
                                 f"raise cap to at least {n_entries}")
    P, K, ns = key.n_offsets, key.config.pixels_per_lenslet, key.config.sensor_samples
    pitch = key.voxel_pitch
    ox = default_origin(nx, P, pitch) if lateral_origin is None else lateral_origin[0]
    oy = default_origin(ny, P, pitch) if lateral_origin is None else lateral_origin[1]
    H = np.zeros((Sy, Sx, nz, ny, nx))
    win = np.arange(ns) - ns // 2
    for iz in range(nz):
        for iy in range(ny):
            # voxel position in pitch units, measured on the lenslet-centred lattice
            qy = int(round((oy + iy * pitch) / pitch + (P - 1) / 2))
            Ly, sy = divmod(qy, P)
            rows = Sy // 2 + Ly * K + win
            rsel = (rows >= 0) & (rows < Sy)
            for ix in range(nx):
                qx = int(round((ox + ix * pitch) / pitch + (P - 1) / 2))
                Lx, sx = divmod(qx, P)
                cols = Sx // 2 + Lx * K + win
                csel = (cols >= 0) & (cols < Sx)
                psf = key.psf(iz, sy, sx)
                H[:, :, iz, iy, ix][np.ix_(rows[rsel], cols[csel])] = psf[np.ix_(rsel, csel)]
    return H.reshape(Sy * Sx, nz * ny * nx)


# --- encryption and attacks -------------------------------------------------


def quantize(values, bits):
    """Scale the peak to ``2**bits - 1`` and round half up."""
    peak = float(values.max())
    if peak <= 0:
        return np.zeros_like(values), 1.0
    scale = (2 ** bits - 1) / peak
    return np.floor(values * scale + 0.5), scale


def encrypt(volume, key, bits=None, sensor_shape=None, operator=None):
    """Encrypt a volume into a light-field image.

    With ``bits`` set, the image is quantized like a ``bits``-deep camera and
    the scale factor (counts per intensity unit) is kept in
    ``metadata["scale"]``.
    """
    img = apply_forward(volume, key, sensor_shape, operator)
    img.metadata["key_checksum"] = key.checksum
    img.metadata["volume_shape"] = list(volume.shape)
    if bits:
        if not (1 <= int(bits) <= 32):
            raise ConfigurationError("camera bit depth must be between 1 and 32")
        img.values, scale = quantize(img.values, int(bits))
        img.metadata.update(bits=int(bits), scale=scale)
    return img


def occlude(image, fraction=None, region=None, mode="corner", seed=0):
    """Block part of the image: occluded pixels become 0 and are masked out.

    Parameters
    ----------
    fraction : float in (0, 1)
        Fraction of pixels to block; exactly ``floor(fraction * n_pixels)``
        pixels are removed.
    region : tuple ``(row0, col0, height, width)``
        Explicit rectangle instead of a fraction.
    mode : {"corner", "random"}
        ``"corner"`` fills columns of a top-left block, half the image high
        for fractions up to 0.5 and full height beyond, so 0.25 is exactly
        one quadrant. ``"random"`` picks pixels uniformly (seeded).
    """
    Sy, Sx = image.shape
    blocked = np.zeros((Sy, Sx), bool)
    if region is not None:
        r0, c0, h, w = (int(v) for v in region)
        if r0 < 0 or c0 < 0 or h < 0 or w < 0 or r0 + h > Sy or c0 + w > Sx:
            raise ConfigurationError(f"occlusion region {region} outside the {Sy}x{Sx} image")
        blocked[r0:r0 + h, c0:c0 + w] = True
    else:
        if fraction is None or not (0 <= fraction < 1):
            raise ConfigurationError(f"occlusion fraction must be in (0, 1), got {fraction}")
        n = int(np.floor(fraction * Sy * Sx))
        if mode == "corner":
            height = (Sy + 1) // 2 if fraction <= 0.5 else Sy
            cols, rows = np.divmod(np.arange(n), height)
            blocked[rows, cols] = True
        elif mode == "random":
            pick = _rng.stream(seed, _rng.STREAM_OCCLUSION).permutation(Sy * Sx)[:n]
            blocked.flat[pick] = True
        else:
            raise ConfigurationError(f"unknown occlusion mode {mode!r}")
    mask = image.valid() & ~blocked
    meta = dict(image.metadata)
    meta["occlusion"] = {"fraction": fraction, "region": region, "mode": mode,
                         "blocked_pixels": int((~mask).sum())}
    return LightFieldImage(np.where(mask, image.values, 0.0), image.pixel_pitch, mask, meta)
