"""Wave-optics point-spread functions for a microlens array with random masks.

A point emitter at object position ``p = (x, y, z)`` produces a Debye field
at the lenslet plane. That field is multiplied by the lenslet-array phase
and the random mask, propagated one lenslet focal length with the angular
spectrum method, and detected as intensity on the sensor.

Arrays are indexed ``[row, col] = [y, x]``. Field windows are centred on a
lenslet centre; image-plane coordinates are measured from the centre of the
on-axis lenslet.
"""

from dataclasses import dataclass
import math
from typing import NamedTuple

import numpy as np
from scipy import fft, special

from . import _rng
from .errors import ConfigurationError, NumericalError, SamplingError

DEFAULT_QUADRATURE_NODES = 512
QUADRATURE_RULES = ("gauss", "simpson")


class SamplingCheck(NamedTuple):
    passed: bool
    threshold: float


@dataclass(frozen=True)
class SamplingGrid:
    """Square grid of ``n`` samples spaced ``interval`` apart.

    ``center`` is the ``(x, y)`` image-plane position of the middle sample.
    """

    n: int
    interval: float
    center: tuple = (0.0, 0.0)

    def axis(self, which):
        c = self.center[0] if which == "x" else self.center[1]
        return c + (np.arange(self.n) - self.n // 2) * self.interval

    @classmethod
    def for_config(cls, config, center=(0.0, 0.0)):
        return cls(config.psf_samples, config.sim_interval, tuple(center))


@dataclass
class ComplexField:
    values: np.ndarray
    sample_interval: float
    center: tuple = (0.0, 0.0)

    @property
    def grid(self):
        return SamplingGrid(self.values.shape[0], self.sample_interval, self.center)

    def intensity(self):
        return np.abs(self.values) ** 2


def validate_sampling(distance, sample_interval, n_samples, wavelength):
    """Check the near-field sampling condition ``distance <= N dx^2 / lambda``.

    Returns
    -------
    SamplingCheck
        ``passed`` and the smallest admissible sample interval
        ``sqrt(distance * wavelength / n_samples)``.
    """
    distance = abs(distance)
    if sample_interval <= 0 or n_samples <= 0 or wavelength <= 0:
        raise ConfigurationError("sample interval, sample count and wavelength must be positive")
    threshold = math.sqrt(distance * wavelength / n_samples)
    return SamplingCheck(sample_interval >= threshold, threshold)


def require_sampling(distance, sample_interval, n_samples, wavelength):
    check = validate_sampling(distance, sample_interval, n_samples, wavelength)
    if not check.passed:
        raise SamplingError(
            f"sample interval {sample_interval * 1e6:.4g} um is below the sampling "
            f"threshold {check.threshold * 1e6:.4g} um for propagation over "
            f"{abs(distance) * 1e3:.4g} mm with {n_samples} samples",
            threshold=check.threshold,
        )
    return check


# --- Debye field ------------------------------------------------------------


def gauss_weights(n, a, b):
    x, w = np.polynomial.legendre.leggauss(n)
    return (x + 1) * (b - a) / 2 + a, w * (b - a) / 2


def simpson_weights(n_intervals, a, b):
    if n_intervals < 2 or n_intervals % 2:
        raise ConfigurationError("Simpson quadrature needs an even number of intervals >= 2")
    h = (b - a) / n_intervals
    w = np.full(n_intervals + 1, 2.0)
    w[1::2] = 4.0
    w[0] = w[-1] = 1.0
    return np.linspace(a, b, n_intervals + 1), w * h / 3.0


class DebyeQuadrature:
    """Angular quadrature for the Debye integral, shared by many points.

    The Bessel kernel ``J0(v sin(theta) / sin(alpha))`` depends only on the
    radial distance, and the axial position enters only through a phase
    weight, so one kernel evaluation per distinct radius serves every depth.
    """

    def __init__(self, config, nodes=DEFAULT_QUADRATURE_NODES, rule="gauss"):
        if rule not in QUADRATURE_RULES:
            raise ConfigurationError(f"unknown quadrature rule {rule!r}")
        self.config = config
        self.nodes = nodes
        self.rule = rule
        alpha = config.alpha
        weights = gauss_weights if rule == "gauss" else simpson_weights
        theta, w = weights(nodes, 0.0, alpha)
        self.theta = theta
        self.s_ratio = np.sin(theta) / math.sin(alpha)
        # P(theta) sin(theta) dtheta; cos clipped for alpha -> pi/2
        self.base_weights = w * np.sqrt(np.clip(np.cos(theta), 0.0, None)) * np.sin(theta)
        self._half = math.sin(alpha / 2) ** 2
        self.k = config.wavenumber
        self.sin_alpha = math.sin(alpha)

    def check_depth(self, z):
        if not math.isfinite(z) or abs(z) > self.config.max_defocus:
            raise ConfigurationError(
                f"axial position {z!r} m outside the configured range +/-{self.config.max_defocus} m")

    def depth_weights(self, zs):
        """Return ``(prefactor, weights)`` for axial positions ``zs``.

        ``weights`` has one row per quadrature node and one column per depth.
        """
        zs = np.atleast_1d(np.asarray(zs, dtype=float))
        for z in zs:
            self.check_depth(float(z))
        u = 4 * self.k * zs * self._half
        phase = np.exp(1j * np.outer(np.sin(self.theta / 2) ** 2, u) / (2 * self._half))
        pref = np.exp(-1j * u / (4 * self._half))
        return pref, self.base_weights[:, None] * phase

    def radial_profile(self, r, zs, chunk=4096):
        """Debye field at object-space radial distances ``r`` for depths ``zs``.

        Returns an array of shape ``(len(r), len(zs))``.
        """
        r = np.asarray(r, dtype=float).ravel()
        pref, wz = self.depth_weights(zs)
        out = np.empty((r.size, wz.shape[1]), dtype=complex)
        v = self.k * r * self.sin_alpha
        for i in range(0, r.size, chunk):
            kern = special.j0(np.outer(v[i:i + chunk], self.s_ratio))
            out[i:i + chunk] = kern @ wz
        out *= pref[None, :]
        return out


def _object_offsets(grid, config, p):
    """Object-referred lateral distances from sample to emitter, squared."""
    m = config.magnification
    dx = grid.axis("x") / m - p[0]
    dy = grid.axis("y") / m - p[1]
    return dy[:, None] ** 2 + dx[None, :] ** 2


def debye_field(p, grid, config, nodes=DEFAULT_QUADRATURE_NODES, rule="gauss", quadrature=None):
    """Debye field of a point emitter sampled on the lenslet-plane grid.

    The radial coordinate uses sensor positions divided by the magnification,
    with object-side aperture angle and wavenumber. The constant prefactor in
    front of the integral is dropped; PSFs are energy-normalized later.

    Parameters
    ----------
    p : sequence of 3 floats
        Emitter position ``(x, y, z)`` in object space, meters.
    grid : SamplingGrid
        Lenslet-plane sampling.
    config : OpticalSystemConfig
    nodes : int
        Quadrature nodes (Gauss-Legendre) or intervals (Simpson) over
        ``[0, alpha]``.
    rule : {"gauss", "simpson"}
    """
    q = quadrature if quadrature is not None else DebyeQuadrature(config, nodes, rule)
    p = tuple(float(c) for c in p)
    q.check_depth(p[2])
    r2 = _object_offsets(grid, config, p)
    uniq, inverse = np.unique(r2, return_inverse=True)
    prof = q.radial_profile(np.sqrt(uniq), [p[2]])[:, 0]
    values = prof[inverse.reshape(r2.shape)]
    if not np.all(np.isfinite(values)):
        raise NumericalError(f"non-finite Debye field for emitter at {p}")
    return ComplexField(values, grid.interval, grid.center)


# --- lenslet array and masks ------------------------------------------------


def _lenslet_local(grid, config, which):
    """Per-axis lenslet-cell coordinates of grid samples.

    Returns ``(t2, K)`` where ``K`` is samples per lenslet and ``t2`` is twice
    the position of each sample measured from the start of its lenslet cell,
    in sample units. Cells are half-open, ``[-d/2, d/2)`` around each centre.
    """
    K = int(round(config.lenslet_pitch / grid.interval))
    if K < 1 or abs(config.lenslet_pitch / grid.interval - K) > 1e-6:
        raise ConfigurationError("grid interval does not divide the lenslet pitch")
    c = grid.center[0] if which == "x" else grid.center[1]
    c_idx = c / grid.interval
    if abs(c_idx - round(c_idx)) > 1e-6:
        raise ConfigurationError("grid centre is not on the sample lattice of the lenslet array")
    m = int(round(c_idx)) + np.arange(grid.n) - grid.n // 2
    T = 2 * m + K
    L = np.floor_divide(T, 2 * K)
    return T - 2 * K * L, K


def lenslet_modulation(grid, config, focal=None):
    """Phase of the tiled lenslet array, ``exp(-i k |x_local|^2 / (2 f))``."""
    f = config.lenslet_focal if focal is None else focal
    k = config.wavenumber
    axes = []
    for which in ("y", "x"):
        t2, K = _lenslet_local(grid, config, which)
        local = (t2 - K) * (grid.interval / 2)
        axes.append(np.exp(-1j * k * local ** 2 / (2 * f)) if math.isfinite(f) else np.ones(grid.n, complex))
    return ComplexField(np.outer(axes[0], axes[1]), grid.interval, grid.center)


def mask_tile(kind, seed, n_pixels, law="bernoulli", stream_id=_rng.STREAM_LENSLET_MASK):
    """One lenslet's worth of mask pixels, ``n_pixels x n_pixels`` complex."""
    if kind == "none":
        return np.ones((n_pixels, n_pixels), complex)
    rng = _rng.stream(seed, stream_id)
    u = rng.random((n_pixels, n_pixels))
    if kind == "random_phase":
        return np.exp(-1j * np.pi * (u - 0.5))
    if kind == "random_amplitude":
        if law == "bernoulli":
            return (u < 0.5).astype(complex)
        return u.astype(complex)
    raise ConfigurationError(f"unknown mask kind {kind!r}")


def _tile_on_grid(tile, grid, config, mask_pixel):
    n_pix = int(round(config.lenslet_pitch / mask_pixel))
    if abs(config.lenslet_pitch / mask_pixel - n_pix) > 1e-6:
        raise ConfigurationError("mask pixel does not divide the lenslet pitch")
    r = int(round(mask_pixel / grid.interval))
    if r < 1 or abs(mask_pixel / grid.interval - r) > 1e-6:
        raise ConfigurationError("grid interval does not divide the mask pixel")
    iy = _lenslet_local(grid, config, "y")[0] // (2 * r)
    ix = _lenslet_local(grid, config, "x")[0] // (2 * r)
    return tile[np.ix_(iy, ix)]


def random_mask(spec, grid, config):
    """Random mask replicated identically behind every lenslet."""
    mp = spec.pixel(config)
    n_pix = int(round(config.lenslet_pitch / mp))
    tile = mask_tile(spec.kind, spec.seed, n_pix, spec.amplitude_law)
    return ComplexField(_tile_on_grid(tile, grid, config, mp), grid.interval, grid.center)


def sensor_mask(spec, grid, config):
    """Amplitude mask in front of the sensor, or ``None`` when disabled.

    It repeats with the lenslet period so that the PSF stays periodic.
    """
    if spec.sensor_seed is None:
        return None
    mp = spec.pixel(config)
    n_pix = int(round(config.lenslet_pitch / mp))
    tile = mask_tile("random_amplitude", spec.sensor_seed, n_pix, spec.amplitude_law,
                     stream_id=_rng.STREAM_SENSOR_MASK)
    return ComplexField(_tile_on_grid(tile, grid, config, mp).real, grid.interval, grid.center)


# --- propagation ------------------------------------------------------------


def transfer_function(n, interval, distance, wavelength):
    """Angular-spectrum transfer function in FFT order; evanescent waves zeroed."""
    f = fft.fftfreq(n, interval)
    arg = 1.0 - (wavelength * f[:, None]) ** 2 - (wavelength * f[None, :]) ** 2
    prop = arg > 0
    H = np.zeros((n, n), complex)
    H[prop] = np.exp(1j * 2 * np.pi * (distance / wavelength) * np.sqrt(arg[prop]))
    return H


def propagate(field, distance, config, check=True):
    """Propagate a field over ``distance`` meters of free space."""
    n = field.values.shape[0]
    if check:
        require_sampling(distance, field.sample_interval, n, config.wavelength)
    H = transfer_function(n, field.sample_interval, distance, config.wavelength)
    out = fft.ifft2(fft.fft2(field.values) * H)
    return ComplexField(out, field.sample_interval, field.center)


# --- point PSF --------------------------------------------------------------


def bin_to_sensor(intensity, factor):
    """Sum ``factor x factor`` blocks of simulation samples into sensor pixels."""
    if factor == 1:
        return intensity
    n = intensity.shape[0] // factor
    return intensity.reshape(n, factor, n, factor).sum(axis=(1, 3))


class PsfModel:
    """Everything about the optical path that does not depend on the emitter.

    Holds the lenslet-plane modulation, the propagation transfer function,
    the sensor mask and the Debye quadrature for one window placement.
    """

    def __init__(self, config, mask, window_center=(0.0, 0.0), nodes=DEFAULT_QUADRATURE_NODES,
                 rule="gauss"):
        self.config = config
        self.mask = mask
        self.grid = SamplingGrid.for_config(config, window_center)
        require_sampling(config.lenslet_focal, self.grid.interval, self.grid.n, config.wavelength)
        self.modulation = (lenslet_modulation(self.grid, config).values
                           * random_mask(mask, self.grid, config).values)
        self.transfer = transfer_function(self.grid.n, self.grid.interval,
                                          config.lenslet_focal, config.wavelength)
        sm = sensor_mask(mask, self.grid, config)
        self.sensor_intensity_mask = None if sm is None else sm.values ** 2
        self.quadrature = DebyeQuadrature(config, nodes, rule)

    def intensity_from_field(self, u):
        """Sensor-pixel intensity from a lenslet-plane Debye field."""
        out = fft.ifft2(fft.fft2(u * self.modulation) * self.transfer)
        inten = out.real ** 2 + out.imag ** 2
        if self.sensor_intensity_mask is not None:
            inten = inten * self.sensor_intensity_mask
        return bin_to_sensor(inten, self.config.oversample)

    def point_psf(self, p):
        u = debye_field(p, self.grid, self.config, quadrature=self.quadrature).values
        return normalize_psf(self.intensity_from_field(u), p)


def normalize_psf(psf, p=None):
    total = psf.sum()
    if not (np.isfinite(total) and total > 0):
        raise NumericalError(f"PSF for emitter at {p} has no finite positive energy")
    return psf / total


def compute_point_psf(p, config, mask, window_center=(0.0, 0.0), nodes=DEFAULT_QUADRATURE_NODES,
                      rule="gauss"):
    """Unit-sum intensity PSF of one emitter on a sensor window.

    The window has ``config.sensor_samples`` pixels per side and its middle
    pixel sits at ``window_center`` (image-plane meters), which must be a
    lenslet centre or another point of the simulation lattice.
    """
    return PsfModel(config, mask, window_center, nodes, rule).point_psf(p)
