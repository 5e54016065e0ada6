"""Built-in demo volumes.

Glyphs are 1-bit bitmaps stored below and scaled to the volume grid by
nearest-neighbour sampling. The animal silhouettes and the smooth blob
standing in for the continuous object are simple substitutes, versioned by
``SCENE_VERSION``.
"""

import numpy as np

from .errors import ConfigurationError
from .forward import Volume

SCENE_VERSION = 1

GLYPHS = {
    "S": """
        ....########....
        ..############..
        .#####....#####.
        .####......###..
        .####...........
        ..######........
        ...##########...
        .....##########.
        ..........#####.
        ...........####.
        .###.......####.
        .#####....#####.
        ..############..
        ....########....
    """,
    "B": """
        .##########.....
        .############...
        .####....#####..
        .####.....####..
        .####....#####..
        .###########....
        .############...
        .####....######.
        .####......####.
        .####......####.
        .####....######.
        .#############..
        .###########....
    """,
    "U": """
        .####......####.
        .####......####.
        .####......####.
        .####......####.
        .####......####.
        .####......####.
        .####......####.
        .####......####.
        .####......####.
        .#####....#####.
        ..############..
        ....########....
    """,
    "deer": """
        ..#..#......#..#
        ..##.#......#.##
        ...###......###.
        ....##......##..
        .....###..###...
        .......####.....
        .......#####....
        ......#######...
        .#############..
        ###############.
        .##############.
        ..#############.
        ..##.#.....#.##.
        ..#..#.....#..#.
        ..#..#.....#..#.
        .##.##....##.##.
    """,
    "dog": """
        ..........###...
        .........#####..
        .........######.
        ........#######.
        .#......####....
        ..#....#####....
        ..##########....
        ..##########....
        ..##########....
        ..#########.....
        ..##.....##.....
        ..##.....##.....
        ..##.....##.....
        .###....###.....
    """,
    "bird": """
        ................
        ....###.........
        ...#####........
        ..###.####......
        ......#####.....
        .......######...
        ..###############
        .################
        ...#############.
        .....#########...
        .......###.......
        .......#.#......
        ......##.##.....
    """,
}


def glyph(name):
    """Bitmap of a glyph as a boolean array."""
    try:
        text = GLYPHS[name]
    except KeyError:
        raise ConfigurationError(f"unknown glyph {name!r}") from None
    rows = [r.strip() for r in text.strip().splitlines()]
    width = max(len(r) for r in rows)
    return np.array([[c == "#" for c in r.ljust(width, ".")] for r in rows])


def render(name, size):
    """Glyph scaled to fit a ``size x size`` box, aspect preserved, centred."""
    g = glyph(name)
    h, w = g.shape
    scale = size / max(h, w)
    oh, ow = max(1, round(h * scale)), max(1, round(w * scale))
    rows = np.minimum((np.arange(oh) + 0.5) / scale, h - 1).astype(int)
    cols = np.minimum((np.arange(ow) + 0.5) / scale, w - 1).astype(int)
    out = np.zeros((size, size), bool)
    r0, c0 = (size - oh) // 2, (size - ow) // 2
    out[r0:r0 + oh, c0:c0 + ow] = g[np.ix_(rows, cols)]
    return out


def axial_grid(start=-60e-6, step=2e-6, n=26):
    return tuple(start + step * np.arange(n))


def _nearest(zs, z):
    i = int(np.argmin(np.abs(np.asarray(zs) - z)))
    if abs(zs[i] - z) > 1e-9:
        raise ConfigurationError(f"no volume plane at z = {z * 1e6:.3g} um")
    return i


SBU_DEPTHS = (-60e-6, -34e-6, -10e-6)


def sbu(lateral=128, pitch=0.25e-6, z_planes=None, fill=0.6, levels=None):
    """Letters S, B and U, one plane thick, at -60, -34 and -10 um.

    ``levels`` splits each letter into horizontal bands of the given
    amplitudes (for grey-level scenes); default is a binary scene.
    """
    zs = axial_grid() if z_planes is None else tuple(z_planes)
    vol = np.zeros((len(zs), lateral, lateral))
    size = max(4, int(round(fill * lateral)))
    r0 = (lateral - size) // 2
    for letter, z in zip("SBU", SBU_DEPTHS):
        bitmap = render(letter, size).astype(float)
        if levels:
            bands = np.minimum(np.arange(size) * len(levels) // size, len(levels) - 1)
            bitmap *= np.asarray(levels, float)[bands][:, None]
        vol[_nearest(zs, z), r0:r0 + size, r0:r0 + size] = bitmap
    return Volume(vol, pitch, zs)


def multiplex(lateral=256, pitch=0.25e-6, z_planes=None, blob_diameter=30e-6, blob_depth=(-60e-6, -10e-6)):
    """Deer, dog and bird planes in three quadrants plus a smooth 3D blob in the fourth."""
    zs = axial_grid() if z_planes is None else tuple(z_planes)
    vol = np.zeros((len(zs), lateral, lateral))
    half = lateral // 2
    size = int(round(0.8 * half))
    pad = (half - size) // 2
    corners = {"deer": (0, 0), "dog": (0, half), "bird": (half, 0)}
    for (name, (r, c)), z in zip(corners.items(), SBU_DEPTHS):
        vol[_nearest(zs, z), r + pad:r + pad + size, c + pad:c + pad + size] = render(name, size)
    # smooth ellipsoidal blob: cos^2 falloff inside the ellipsoid
    yy = (np.arange(half) - (half - 1) / 2) * pitch
    z0, z1 = blob_depth
    zc, rz = (z0 + z1) / 2, (z1 - z0) / 2
    rxy = min(blob_diameter / 2, half * pitch / 2)
    for iz, z in enumerate(zs):
        rho2 = (yy[:, None] ** 2 + yy[None, :] ** 2) / rxy ** 2 + ((z - zc) / rz) ** 2
        vol[iz, half:, half:] = np.where(rho2 < 1, np.cos(np.pi / 2 * np.sqrt(np.clip(rho2, 0, 1))) ** 2, 0.0)
    return Volume(vol, pitch, zs)


GREY_LEVELS = {3: (128, 255), 4: (85, 170, 255)}


def grayscale(n_levels, lateral=128, pitch=0.25e-6, z_planes=None):
    """S/B/U scene on 3 levels (0, 128, 255) or 4 levels (0, 85, 170, 255), scaled to [0, 1]."""
    try:
        levels = GREY_LEVELS[n_levels]
    except KeyError:
        raise ConfigurationError("grey-level scenes have 3 or 4 levels") from None
    return sbu(lateral, pitch, z_planes, levels=[v / 255 for v in levels])


SCENES = {
    "sbu": sbu,
    "multiplex": multiplex,
    "grayscale3": lambda **kw: grayscale(3, **kw),
    "grayscale4": lambda **kw: grayscale(4, **kw),
}


def make_scene(name, **kwargs):
    try:
        factory = SCENES[name]
    except KeyError:
        raise ConfigurationError(f"unknown scene {name!r}; choose from {sorted(SCENES)}") from None
    return factory(**kwargs)
