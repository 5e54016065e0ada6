import numpy as np
import pytest
from PIL import Image

from lfcrypt import KeyFormatError, LightFieldImage, Volume
from lfcrypt.errors import ConfigurationError
from lfcrypt.io import (export_png16, import_stack, load_image, load_mask, load_volume, save_image,
                        save_volume)


def test_volume_roundtrip(tmp_path, rng):
    vol = Volume(rng.random((3, 5, 4)), 0.5e-6, (-60e-6, -34e-6, -10e-6), (1e-6, -2e-6))
    save_volume(vol, tmp_path / "v")
    back = load_volume(tmp_path / "v")
    assert np.array_equal(back.values, vol.values)
    assert back.lateral_pitch == vol.lateral_pitch and back.axial_positions == vol.axial_positions
    assert back.lateral_origin == vol.lateral_origin


def test_image_roundtrip_with_mask(tmp_path, rng):
    img = LightFieldImage(rng.random((6, 7)), 10e-6, rng.random((6, 7)) > 0.5, {"bits": 12, "scale": 3.5})
    save_image(img, tmp_path / "i")
    back = load_image(tmp_path / "i")
    assert np.array_equal(back.values, img.values) and np.array_equal(back.mask, img.mask)
    assert back.metadata == img.metadata


def test_files_are_deterministic(tmp_path, rng):
    vol = Volume(rng.random((2, 3, 3)), 1e-6, (0.0, 1e-6))
    save_volume(vol, tmp_path / "a")
    save_volume(vol, tmp_path / "b")
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()


def test_corruption_detected(tmp_path, rng):
    save_image(LightFieldImage(rng.random((4, 4)), 1e-5), tmp_path / "i")
    raw = bytearray((tmp_path / "i").read_bytes())
    raw[-3] ^= 0x10
    (tmp_path / "bad").write_bytes(raw)
    with pytest.raises(KeyFormatError):
        load_image(tmp_path / "bad")
    with pytest.raises(KeyFormatError):
        load_volume(tmp_path / "i")


def test_stack_import_8_and_16_bit(tmp_path):
    a = np.array([[0, 128], [255, 64]], np.uint8)
    b = np.array([[0, 65535], [32768, 1]], np.uint16)
    Image.fromarray(a).save(tmp_path / "a.png")
    Image.fromarray(b).save(tmp_path / "b.png")
    vol = import_stack([tmp_path / "a.png", tmp_path / "b.png"], 1e-6, (0.0, 2e-6))
    assert vol.shape == (2, 2, 2)
    assert vol.values[0, 1, 0] == 1.0 and vol.values[0, 0, 1] == pytest.approx(128 / 255)
    assert vol.values[1, 0, 1] == 1.0 and vol.values[1, 1, 1] == pytest.approx(1 / 65535)


def test_stack_import_multipage_tiff(tmp_path):
    frames = [Image.fromarray(np.full((3, 3), v, np.uint8)) for v in (0, 51, 255)]
    frames[0].save(tmp_path / "s.tif", save_all=True, append_images=frames[1:])
    vol = import_stack(tmp_path / "s.tif", 1e-6, (0.0, 1e-6, 2e-6))
    assert vol.values[:, 0, 0].tolist() == pytest.approx([0, 0.2, 1])


def test_stack_shape_mismatch(tmp_path):
    Image.fromarray(np.zeros((2, 2), np.uint8)).save(tmp_path / "a.png")
    Image.fromarray(np.zeros((3, 2), np.uint8)).save(tmp_path / "b.png")
    with pytest.raises(ConfigurationError):
        import_stack([tmp_path / "a.png", tmp_path / "b.png"], 1e-6, (0.0, 1e-6))


def test_png16_export(tmp_path, rng):
    img = LightFieldImage(rng.random((5, 5)), 1e-5)
    scale = export_png16(img, tmp_path / "o.png")
    counts = np.asarray(Image.open(tmp_path / "o.png"))
    assert counts.max() == 65535
    assert np.abs(counts / scale - img.values).max() <= 0.5 / scale + 1e-15


def test_mask_file(tmp_path):
    m = np.zeros((4, 4), np.uint8)
    m[:2, :2] = 255
    Image.fromarray(m).save(tmp_path / "m.png")
    valid = load_mask(tmp_path / "m.png", (4, 4))
    assert (~valid).sum() == 4 and not valid[0, 0]
    with pytest.raises(ConfigurationError):
        load_mask(tmp_path / "m.png", (5, 5))
