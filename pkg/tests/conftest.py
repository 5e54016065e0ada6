import numpy as np
import pytest

from lfcrypt import MaskSpec, OpticalSystemConfig, build_psf_key

# One 80 um lenslet covering an 8 x 8 sensor; 7 x 7 PSF windows.
# f = 1 mm keeps the 10 um pixel above the sampling bound sqrt(f lambda / 7) = 8.7 um.
TINY_OPTICS = dict(lenslet_pitch=80e-6, lenslet_focal=1e-3, psf_samples=7)
TINY_Z = (-4e-6, 4e-6)
TINY_PITCH = 1e-6  # 80 um / 20 / 1 um = 4 offsets per axis


@pytest.fixture(scope="session")
def tiny_config():
    return OpticalSystemConfig(**TINY_OPTICS)


@pytest.fixture(scope="session")
def tiny_key(tiny_config):
    return build_psf_key(tiny_config, MaskSpec("random_phase", 3), TINY_Z, TINY_PITCH, nodes=128, workers=1)


@pytest.fixture(scope="session")
def tiny_clear_key(tiny_config):
    return build_psf_key(tiny_config, MaskSpec("none"), TINY_Z, TINY_PITCH, nodes=128, workers=1)


@pytest.fixture(scope="session")
def small_config():
    """Several 40 um lenslets: 4 sensor pixels each, 4 x 4 offsets at 0.5 um voxels."""
    return OpticalSystemConfig(lenslet_pitch=40e-6, lenslet_focal=1e-3, psf_samples=7)


@pytest.fixture(scope="session")
def small_key(small_config):
    return build_psf_key(small_config, MaskSpec("random_phase", 5), TINY_Z, 0.5e-6, nodes=128, workers=1)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


# PASS/FAIL lines from the acceptance module, repeated in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
