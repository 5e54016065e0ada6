import numpy as np
import pytest

from lfcrypt.errors import ConfigurationError
from lfcrypt.scenes import SBU_DEPTHS, axial_grid, glyph, grayscale, make_scene, multiplex, render, sbu


def test_axial_grid_reference():
    zs = axial_grid()
    assert len(zs) == 26
    assert zs[0] == pytest.approx(-60e-6) and zs[-1] == pytest.approx(-10e-6)
    assert np.allclose(np.diff(zs), 2e-6)


def test_sbu_planes():
    vol = sbu()
    assert vol.shape == (26, 128, 128)
    nonzero = [i for i in range(26) if vol.values[i].any()]
    assert [vol.axial_positions[i] for i in nonzero] == pytest.approx(list(SBU_DEPTHS))
    assert set(np.unique(vol.values)) == {0.0, 1.0}


def test_sbu_on_three_plane_grid():
    vol = sbu(64, 0.5e-6, SBU_DEPTHS)
    assert vol.shape == (3, 64, 64) and all(vol.values[i].any() for i in range(3))


def test_sbu_needs_planes_at_depths():
    with pytest.raises(ConfigurationError):
        sbu(32, z_planes=(-59e-6, -34e-6, -10e-6))


@pytest.mark.parametrize("n,levels", [(3, {0, 128, 255}), (4, {0, 85, 170, 255})])
def test_grayscale_levels(n, levels):
    vol = grayscale(n, lateral=64)
    got = {int(round(v * 255)) for v in np.unique(vol.values)}
    assert got == levels


def test_multiplex_quadrants():
    vol = multiplex(lateral=64)
    v = vol.values
    assert v[:, :32, :32].any() and v[:, :32, 32:].any() and v[:, 32:, :32].any()
    blob = v[:, 32:, 32:]
    assert 0 < blob.max() <= 1 and len({i for i in range(26) if blob[i].any()}) > 10


def test_glyph_render():
    g = glyph("S")
    assert g.dtype == bool and g.any()
    r = render("B", 40)
    assert r.shape == (40, 40) and r.any()
    with pytest.raises(ConfigurationError):
        glyph("Q")


def test_unknown_scene():
    with pytest.raises(ConfigurationError):
        make_scene("bunny")
    assert make_scene("grayscale3", lateral=32).shape == (26, 32, 32)
