"""Reconstruction quality metrics and scripted attack experiments."""

from dataclasses import dataclass, field
import json

import numpy as np

from .errors import ConfigurationError
from .forward import LightFieldOperator, encrypt, occlude
from .inverse import DeconvSettings, decrypt
from .key import perturb_key


@dataclass
class CorrelationReport:
    """Peak of the zero-mean normalized cross-correlation.

    ``offset`` is the ``(dy, dx)`` shift of the reconstruction relative to
    the reference at the peak.
    """

    peak: float
    offset: tuple
    objects: dict = field(default_factory=dict)

    def to_dict(self):
        return {"C": self.peak, "offset": list(self.offset), "objects": self.objects}


def normalized_correlation(reference, reconstruction, max_shift=None):
    """Zero-mean normalized cross-correlation, maximized over integer shifts.

    For each shift ``s`` the two images are compared on their overlap only,
    each centred by its own overlap mean::

        C(s) = sum (a - mean a)(b_s - mean b_s) / (||a - mean a|| ||b_s - mean b_s||)

    Parameters
    ----------
    reference, reconstruction : 2D arrays of equal shape
    max_shift : int, optional
        Largest shift searched along each axis; default a quarter of the
        smaller side, which keeps every overlap at least 3/4 of the image.
    """
    a = np.asarray(reference, dtype=float)
    b = np.asarray(reconstruction, dtype=float)
    if a.ndim != 2 or a.shape != b.shape:
        raise ConfigurationError(f"images must be 2D with equal shapes, got {a.shape} and {b.shape}")
    if np.ptp(a) == 0:
        raise ConfigurationError("reference image is constant; correlation is undefined")
    ny, nx = a.shape
    if max_shift is None:
        max_shift = min(ny, nx) // 4
    # rescale so tiny reconstructions do not underflow the variance test
    a = a / np.abs(a).max()
    bmax = np.abs(b).max()
    b = b / bmax if bmax > 0 else b
    best, best_off = -np.inf, (0, 0)
    for dy in range(-max_shift, max_shift + 1):
        ya, yb = slice(max(0, -dy), ny - max(0, dy)), slice(max(0, dy), ny - max(0, -dy))
        for dx in range(-max_shift, max_shift + 1):
            xa, xb = slice(max(0, -dx), nx - max(0, dx)), slice(max(0, dx), nx - max(0, -dx))
            pa = a[ya, xa] - a[ya, xa].mean()
            pb = b[yb, xb] - b[yb, xb].mean()
            den = np.sqrt(np.sum(pa * pa) * np.sum(pb * pb))
            if den <= 1e-300:
                continue
            c = float(np.sum(pa * pb) / den)
            # ties resolve to the smallest |shift|, then scan order
            if c > best + 1e-12 or (abs(c - best) <= 1e-12 and abs(dy) + abs(dx) < sum(map(abs, best_off))):
                best, best_off = c, (dy, dx)
    if not np.isfinite(best):
        best = 0.0
    return CorrelationReport(min(best, 1.0), best_off)


def plane_correlations(reference, reconstruction, max_shift=None):
    """Correlation per axial plane, for planes where the reference has structure.

    Returns ``{plane_index: CorrelationReport}``.
    """
    ref = reference.values if hasattr(reference, "values") else np.asarray(reference)
    rec = reconstruction.values if hasattr(reconstruction, "values") else np.asarray(reconstruction)
    out = {}
    for iz in range(ref.shape[0]):
        if np.ptp(ref[iz]) > 0:
            out[iz] = normalized_correlation(ref[iz], rec[iz], max_shift)
    return out


def object_correlations(reference, reconstruction, objects, max_shift=None):
    """Correlation per named object, each given as ``name -> (plane, (r0, c0, h, w))``."""
    table = {}
    for name, (iz, (r0, c0, h, w)) in objects.items():
        sl = (iz, slice(r0, r0 + h), slice(c0, c0 + w))
        table[name] = normalized_correlation(reference.values[sl], reconstruction.values[sl],
                                             max_shift).to_dict()
    return table


# --- attack suite -----------------------------------------------------------


@dataclass
class AttackEntry:
    name: str
    params: dict
    correlations: dict
    reconstruction: object = None

    def record(self, paths=None):
        return {
            "entry": self.name,
            "params": self.params,
            "C": {str(k): v.peak for k, v in self.correlations.items()},
            "offsets": {str(k): list(v.offset) for k, v in self.correlations.items()},
            "files": paths or {},
        }


@dataclass
class AttackReport:
    entries: list

    def __getitem__(self, name):
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def names(self):
        return [e.name for e in self.entries]

    def lines(self, paths=None):
        paths = paths or {}
        return [json.dumps(e.record(paths.get(e.name)), sort_keys=True) for e in self.entries]

    def write(self, fh, paths=None):
        for line in self.lines(paths):
            fh.write(line + "\n")


def run_attack_suite(scene, key, settings=None, occlusion_fractions=(0.25, 0.375),
                     perturbation_fractions=(0.05,), occlusion_mode="corner", seed=0,
                     sensor_shape=None, max_shift=None, keep_reconstructions=True):
    """Decrypt the scene's light-field image under the standard attacks.

    Entries, in order: ``baseline`` (correct key), ``occlusion-<f>`` per
    occlusion fraction and ``perturbed-<f>`` per key-perturbation fraction.
    Each holds the per-plane correlation against the scene.
    """
    settings = settings or DeconvSettings()
    op = LightFieldOperator(key, scene.shape, sensor_shape, scene.lateral_origin)
    image = encrypt(scene, key, operator=op)

    def run(name, params, img, k, operator):
        rec = decrypt(img, k, settings, scene.shape, scene.lateral_origin, operator=operator)
        corr = plane_correlations(scene, rec, max_shift)
        return AttackEntry(name, params, corr, rec if keep_reconstructions else None)

    entries = [run("baseline", {"iterations": settings.iterations}, image, key, op)]
    for f in occlusion_fractions:
        if f == 0:
            occluded = image
        else:
            occluded = occlude(image, fraction=f, mode=occlusion_mode, seed=seed)
        params = {"fraction": f, "mode": occlusion_mode, "masked": settings.mask_occluded,
                  "blocked_pixels": int((~occluded.valid()).sum())}
        entries.append(run(f"occlusion-{f:g}", params, occluded, key, op))
    for f in perturbation_fractions:
        bad = perturb_key(key, f, seed)
        bad_op = LightFieldOperator(bad, scene.shape, sensor_shape, scene.lateral_origin)
        entries.append(run(f"perturbed-{f:g}", {"fraction": f, "seed": seed}, image, bad, bad_op))
    return AttackReport(entries)
