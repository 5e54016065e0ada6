"""The PSF key: one sensor PSF per (depth, sub-period lateral offset).

Voxels whose lateral positions differ by whole lenslet periods share a PSF
up to a shift of one lenslet on the sensor, so a key only stores the
``P x P`` distinct offsets inside one period for every depth plane.

File layout (``.lfpk``)::

    b"LFPK1\\n"
    b"<header length in bytes>\\n"
    header        UTF-8 JSON, indented
    index         little-endian int32, (n_planes, P, P, 4) support boxes
                  (row0, col0, height, width)
    data          little-endian float64, the support box of every PSF in
                  (plane, offset_y, offset_x) order, row-major
"""

from concurrent.futures import ThreadPoolExecutor
import hashlib
import json
import os
import shutil
import tempfile

import numpy as np

from . import _rng
from .config import MaskSpec, OpticalSystemConfig
from .errors import ConfigurationError, KeyFormatError
from .psf import DEFAULT_QUADRATURE_NODES, PsfModel, normalize_psf

MAGIC = b"LFPK1"
FORMAT_VERSION = 1
SUPPORT_THRESHOLD = 1e-8


def default_workers():
    env = os.environ.get("LFCRYPT_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def crop_support(psf, threshold=SUPPORT_THRESHOLD):
    """Zero pixels below ``threshold * peak``, renormalize, return (psf, box)."""
    keep = psf >= threshold * psf.max()
    rows = np.flatnonzero(keep.any(axis=1))
    cols = np.flatnonzero(keep.any(axis=0))
    out = np.where(keep, psf, 0.0)
    out = normalize_psf(out)
    box = (rows[0], cols[0], rows[-1] - rows[0] + 1, cols[-1] - cols[0] + 1)
    return out, box


class PsfKey:
    """Immutable bank of intensity PSFs.

    Planes are held either in memory or read lazily from a key file. Use
    :meth:`plane` to get the dense ``(P, P, n, n)`` stack for one depth.
    """

    def __init__(self, config, mask, z_planes, voxel_pitch, planes=None, boxes=None, *,
                 quadrature=None, perturbation=None, checksum=None, _source=None):
        self.config = config
        self.mask = mask
        self.z_planes = tuple(float(z) for z in z_planes)
        self.voxel_pitch = float(voxel_pitch)
        self.n_offsets = config.offsets_per_period(voxel_pitch)
        self.quadrature = dict(quadrature or {"nodes": DEFAULT_QUADRATURE_NODES, "rule": "gauss"})
        self.perturbation = perturbation
        ns = config.sensor_samples
        P = self.n_offsets
        shape = (len(self.z_planes), P, P, ns, ns)
        if _source is None:
            planes = np.asarray(planes, dtype=float)
            if planes.shape != shape:
                raise ConfigurationError(f"PSF array has shape {planes.shape}, expected {shape}")
            planes.flags.writeable = False
            if boxes is None:
                boxes = np.tile(np.array([0, 0, ns, ns], np.int32), shape[:3] + (1,))
        self._planes = planes
        self._source = _source
        self.boxes = np.asarray(boxes, dtype=np.int32)
        self.boxes.flags.writeable = False
        self.checksum = checksum or self._digest()

    # structure

    @property
    def shape(self):
        ns = self.config.sensor_samples
        return (len(self.z_planes), self.n_offsets, self.n_offsets, ns, ns)

    @property
    def lateral_offsets(self):
        """Object-space offsets of the ``P`` voxel positions within one period."""
        P = self.n_offsets
        return (np.arange(P) - (P - 1) / 2) * self.voxel_pitch

    @property
    def n_psfs(self):
        return int(np.prod(self.shape[:3]))

    @property
    def in_memory(self):
        return self._source is None

    def plane(self, iz):
        """Dense PSF stack ``(P, P, n, n)`` for depth index ``iz`` (read-only)."""
        if self._source is None:
            return self._planes[iz]
        return self._source.read_plane(iz, self.boxes[iz], self.shape[1:])

    def psf(self, iz, sy, sx):
        return self.plane(iz)[sy, sx]

    def to_array(self):
        """All PSFs as one dense array; avoid for keys that do not fit in memory."""
        if self._source is None:
            return self._planes
        return np.stack([self.plane(i) for i in range(self.shape[0])])

    def header(self):
        return {
            "format": MAGIC.decode(),
            "version": FORMAT_VERSION,
            "config": self.config.to_dict(),
            "mask": self.mask.to_dict(),
            "z_planes": list(self.z_planes),
            "voxel_pitch": self.voxel_pitch,
            "n_offsets": self.n_offsets,
            "lateral_offsets": self.lateral_offsets.tolist(),
            "psf_shape": list(self.shape[3:]),
            "quadrature": self.quadrature,
            "perturbation": self.perturbation,
            "support_threshold": SUPPORT_THRESHOLD,
        }

    def _digest(self):
        h = hashlib.sha256()
        meta = {k: v for k, v in self.header().items() if k != "lateral_offsets"}
        h.update(json.dumps(meta, sort_keys=True).encode())
        h.update(self.boxes.astype("<i4").tobytes())
        for iz in range(self.shape[0]):
            for block in _plane_blocks(self.plane(iz), self.boxes[iz]):
                h.update(block.astype("<f8").tobytes())
        return h.hexdigest()

    def __repr__(self):
        nz, P, _, ns, _ = self.shape
        return (f"PsfKey(planes={nz}, offsets={P}x{P}, psf={ns}x{ns}, "
                f"mask={self.mask.kind}, checksum={self.checksum[:12]})")

    # persistence

    def save(self, path):
        write_key(path, self.header(), self.boxes, (self.plane(i) for i in range(self.shape[0])),
                  checksum=self.checksum)

    @classmethod
    def load(cls, path, mmap=None):
        return load_key(path, mmap=mmap)


def _plane_blocks(plane, boxes):
    P = plane.shape[0]
    for sy in range(P):
        for sx in range(P):
            r0, c0, h, w = boxes[sy, sx]
            yield plane[sy, sx, r0:r0 + h, c0:c0 + w]


class _FileSource:
    def __init__(self, path, data_offset, boxes):
        self.path = path
        sizes = boxes[..., 2].astype(np.int64) * boxes[..., 3]
        self.plane_sizes = sizes.reshape(sizes.shape[0], -1).sum(axis=1)
        self.plane_starts = np.concatenate([[0], np.cumsum(self.plane_sizes)[:-1]])
        total = int(self.plane_sizes.sum())
        self.data = np.memmap(path, dtype="<f8", mode="r", offset=data_offset, shape=(total,))

    def read_plane(self, iz, boxes, shape):
        out = np.zeros(shape)
        pos = int(self.plane_starts[iz])
        P = shape[0]
        for sy in range(P):
            for sx in range(P):
                r0, c0, h, w = (int(v) for v in boxes[sy, sx])
                out[sy, sx, r0:r0 + h, c0:c0 + w] = self.data[pos:pos + h * w].reshape(h, w)
                pos += h * w
        out.flags.writeable = False
        return out


def write_key(path, header, boxes, planes, checksum):
    header = dict(header, checksum=checksum)
    hbytes = json.dumps(header, indent=2, sort_keys=True).encode()
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(MAGIC + b"\n")
        fh.write(f"{len(hbytes)}\n".encode())
        fh.write(hbytes)
        fh.write(np.asarray(boxes, dtype="<i4").tobytes())
        for iz, plane in enumerate(planes):
            for block in _plane_blocks(plane, boxes[iz]):
                fh.write(np.ascontiguousarray(block, dtype="<f8").tobytes())
    os.replace(tmp, path)


def read_header(path):
    with open(path, "rb") as fh:
        if fh.readline().rstrip(b"\n") != MAGIC:
            raise KeyFormatError(f"{path}: not a PSF key file (bad magic)")
        try:
            n = int(fh.readline())
            header = json.loads(fh.read(n).decode())
        except (ValueError, UnicodeDecodeError) as exc:
            raise KeyFormatError(f"{path}: corrupt key header") from exc
        return header, fh.tell()


def load_key(path, mmap=None, verify=True):
    """Load a key file.

    ``mmap=None`` keeps keys under ~512 MB in memory and memory-maps larger
    ones.
    """
    header, pos = read_header(path)
    try:
        config = OpticalSystemConfig.from_dict(header["config"])
        mask = MaskSpec.from_dict(header["mask"])
        P = int(header["n_offsets"])
        nz = len(header["z_planes"])
    except (KeyError, TypeError) as exc:
        raise KeyFormatError(f"{path}: incomplete key header ({exc})") from exc
    n_box = nz * P * P * 4
    boxes = np.fromfile(path, dtype="<i4", count=n_box, offset=pos).reshape(nz, P, P, 4)
    if boxes.size != n_box:
        raise KeyFormatError(f"{path}: truncated support index")
    data_offset = pos + 4 * n_box
    n_values = int((boxes[..., 2].astype(np.int64) * boxes[..., 3]).sum())
    if os.path.getsize(path) != data_offset + 8 * n_values:
        raise KeyFormatError(f"{path}: payload size does not match header")
    source = _FileSource(path, data_offset, boxes)
    if mmap is None:
        mmap = n_values * 8 > 512 * 2 ** 20
    kwargs = dict(quadrature=header.get("quadrature"), perturbation=header.get("perturbation"))
    shape = (P, P) + tuple(header["psf_shape"])
    if mmap:
        key = PsfKey(config, mask, header["z_planes"], header["voxel_pitch"], boxes=boxes,
                     _source=source, checksum=None if verify else header["checksum"], **kwargs)
    else:
        planes = np.stack([source.read_plane(i, boxes[i], shape) for i in range(nz)])
        key = PsfKey(config, mask, header["z_planes"], header["voxel_pitch"], planes, boxes,
                     checksum=None if verify else header["checksum"], **kwargs)
    if verify and key.checksum != header.get("checksum"):
        raise KeyFormatError(f"{path}: checksum mismatch, file is corrupt")
    return key


# --- construction -----------------------------------------------------------


def _radius_keys(r2, tol):
    return np.rint(r2 / tol).astype(np.int64)


def build_psf_key(config, mask, z_planes, voxel_pitch_lateral, *, nodes=DEFAULT_QUADRATURE_NODES,
                  rule="gauss", workers=None, path=None, progress=None):
    """Compute the PSF for every depth and sub-period offset.

    Parameters
    ----------
    config : OpticalSystemConfig
    mask : MaskSpec
    z_planes : sequence of float
        Axial emitter positions, meters.
    voxel_pitch_lateral : float
        Object-space lateral voxel pitch; must divide ``lenslet_pitch / M``.
    workers : int, optional
        Threads used over offsets. Results do not depend on it.
    path : str, optional
        Stream the key to this file and return a memory-mapped key, for keys
        too large to hold in memory.
    progress : callable, optional
        Called as ``progress(done, total)`` after each offset.

    Returns
    -------
    PsfKey
    """
    z_planes = [float(z) for z in z_planes]
    if not z_planes:
        raise ConfigurationError("at least one z-plane is required")
    P = config.offsets_per_period(voxel_pitch_lateral)
    # sampling gate runs before any field is evaluated
    model = PsfModel(config, mask, nodes=nodes, rule=rule)
    quad = model.quadrature
    for z in z_planes:
        quad.check_depth(z)

    offs = (np.arange(P) - (P - 1) / 2) * voxel_pitch_lateral
    ax = model.grid.axis("x") / config.magnification
    d2 = (ax[None, :] - offs[:, None]) ** 2          # (P, N), same for y
    # r^2 keys on a 1e-24 m^2 lattice: coarser than float64 ulp at these radii
    # (so equal radii merge) yet far below anything the field resolves
    tol = 1e-24
    all_keys = np.unique(np.concatenate([
        _radius_keys(d2[sy][None, :, None] + d2[:, None, :], tol).ravel() for sy in range(P)]))
    table = quad.radial_profile(np.sqrt(all_keys * tol), z_planes)

    nz, N, ns = len(z_planes), config.psf_samples, config.sensor_samples
    boxes = np.zeros((nz, P, P, 4), np.int32)

    def one_offset(sy, sx):
        keys = _radius_keys(d2[sy][:, None] + d2[sx][None, :], tol)
        idx = np.searchsorted(all_keys, keys)
        out = np.empty((nz, ns, ns))
        bx = np.empty((nz, 4), np.int32)
        for iz in range(nz):
            psf = normalize_psf(model.intensity_from_field(table[idx, iz]),
                                (offs[sx], offs[sy], z_planes[iz]))
            out[iz], bx[iz] = crop_support(psf)
        return out, bx

    jobs = [(sy, sx) for sy in range(P) for sx in range(P)]
    meta = dict(quadrature={"nodes": nodes, "rule": rule})

    if path is None:
        planes = np.empty((nz, P, P, ns, ns))
        for n_done, (sy, sx, (vals, bx)) in enumerate(_run(one_offset, jobs, workers), 1):
            planes[:, sy, sx] = vals
            boxes[:, sy, sx] = bx
            if progress:
                progress(n_done, len(jobs))
        return PsfKey(config, mask, z_planes, voxel_pitch_lateral, planes, boxes, **meta)

    # out-of-core: spool one file per depth, then assemble the key file
    tmpdir = tempfile.mkdtemp(prefix="lfpk-", dir=os.path.dirname(os.path.abspath(path)))
    try:
        spools = [np.lib.format.open_memmap(os.path.join(tmpdir, f"z{iz}.npy"), mode="w+",
                                            shape=(P, P, ns, ns)) for iz in range(nz)]
        for n_done, (sy, sx, (vals, bx)) in enumerate(_run(one_offset, jobs, workers), 1):
            for iz in range(nz):
                spools[iz][sy, sx] = vals[iz]
            boxes[:, sy, sx] = bx
            if progress:
                progress(n_done, len(jobs))
        for s in spools:
            s.flush()
        spooled = _SpoolSource(spools)
        key = PsfKey(config, mask, z_planes, voxel_pitch_lateral, boxes=boxes, _source=spooled, **meta)
        key.save(path)
        del spools, spooled, key
    finally:
        shutil.rmtree(tmpdir, ignore_errors=True)
    return load_key(path, mmap=True, verify=False)


class _SpoolSource:
    def __init__(self, planes):
        self.planes = planes

    def read_plane(self, iz, boxes, shape):
        return np.asarray(self.planes[iz])


def _run(fn, jobs, workers):
    workers = default_workers() if workers is None else workers
    if workers <= 1:
        for j in jobs:
            yield j + (fn(*j),)
        return
    with ThreadPoolExecutor(workers) as pool:
        # map preserves submission order, so results are schedule-independent
        for j, res in zip(jobs, pool.map(lambda j: fn(*j), jobs)):
            yield j + (res,)


def perturb_key(key, fraction, seed, path=None):
    """Multiply every stored PSF value by ``1 + fraction * u``, ``u ~ U[-1, 1]``.

    PSFs are deliberately not renormalized. Depth plane ``iz`` draws from its
    own random stream, so the result does not depend on processing order.
    """
    if not (0 <= fraction < 1):
        raise ConfigurationError(f"perturbation fraction must be in [0, 1), got {fraction}")
    if fraction == 0:
        return key

    meta = dict(quadrature=key.quadrature,
                perturbation={"fraction": float(fraction), "seed": int(seed), "parent": key.checksum})
    source = _PerturbedSource(key, fraction, seed)
    if path is None:
        planes = np.stack([source.read_plane(iz) for iz in range(key.shape[0])])
        return PsfKey(key.config, key.mask, key.z_planes, key.voxel_pitch, planes, key.boxes, **meta)
    tmp = PsfKey(key.config, key.mask, key.z_planes, key.voxel_pitch, boxes=key.boxes,
                 _source=source, **meta)
    tmp.save(path)
    return load_key(path, mmap=True, verify=False)


class _PerturbedSource:
    def __init__(self, key, fraction, seed):
        self.key = key
        self.fraction = fraction
        self.seed = seed

    def read_plane(self, iz, boxes=None, shape=None):
        plane = self.key.plane(iz)
        rng = _rng.stream(self.seed, _rng.STREAM_KEY_PERTURBATION, iz)
        u = 2.0 * rng.random(plane.shape) - 1.0
        return np.clip(plane * (1.0 + self.fraction * u), 0.0, None)
