import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, special, stats

from lfcrypt import (ComplexField, MaskSpec, OpticalSystemConfig, SamplingError, SamplingGrid,
                     compute_point_psf, debye_field, lenslet_modulation, propagate, random_mask,
                     validate_sampling)
from lfcrypt.errors import ConfigurationError
from lfcrypt.psf import (DebyeQuadrature, PsfModel, mask_tile, require_sampling, sensor_mask,
                         transfer_function)

CFG = OpticalSystemConfig()


# --- sampling gate ----------------------------------------------------------


def test_sampling_threshold_reference_values():
    check = validate_sampling(3e-3, 10e-6, 151, 532e-9)
    assert check.passed
    assert abs(check.threshold - 3.2511e-6) < 1e-9
    assert abs(check.threshold - math.sqrt(3e-3 * 532e-9 / 151)) < 1e-18
    assert not validate_sampling(3e-3, 3e-6, 151, 532e-9).passed


def test_sampling_boundary_is_inclusive():
    thr = validate_sampling(3e-3, 1e-6, 151, 532e-9).threshold
    assert validate_sampling(3e-3, thr, 151, 532e-9).passed


def test_require_sampling_reports_threshold():
    with pytest.raises(SamplingError, match="3.251") as exc:
        require_sampling(3e-3, 3e-6, 151, 532e-9)
    assert exc.value.threshold == pytest.approx(3.2511e-6, abs=1e-9)


@given(st.floats(1e-4, 1e-1), st.integers(1, 4096), st.floats(300e-9, 1.2e-6))
def test_sampling_threshold_squares_back(d, n, lam):
    thr = validate_sampling(d, 1.0, n, lam).threshold
    assert thr ** 2 * n / lam == pytest.approx(d, rel=1e-12)


def test_sampling_rejects_nonpositive_inputs():
    with pytest.raises(ConfigurationError):
        validate_sampling(3e-3, 0.0, 151, 532e-9)


# --- Debye integral ---------------------------------------------------------


def test_debye_on_axis_focus_closed_form():
    # U(0, 0) = int_0^a sqrt(cos t) sin t dt = (2/3)(1 - cos^1.5 a)
    grid = SamplingGrid(1, 10e-6)
    u = debye_field((0, 0, 0), grid, CFG).values[0, 0]
    expected = 2 / 3 * (1 - math.cos(CFG.alpha) ** 1.5)
    assert expected == pytest.approx(0.12938, abs=1e-5)
    assert abs(u - expected) < 1e-12


def _debye_reference(v, u, alpha):
    """Direct adaptive quadrature of the Debye integral."""
    s = math.sin(alpha / 2) ** 2

    def f(t, part):
        val = (np.sqrt(np.cos(t)) * np.exp(1j * u * np.sin(t / 2) ** 2 / (2 * s))
               * special.j0(v * np.sin(t) / np.sin(alpha)) * np.sin(t))
        return val.real if part == 0 else val.imag

    re = integrate.quad(f, 0, alpha, args=(0,), epsabs=1e-14, epsrel=1e-13, limit=400)[0]
    im = integrate.quad(f, 0, alpha, args=(1,), epsabs=1e-14, epsrel=1e-13, limit=400)[0]
    return np.exp(-1j * u / (4 * s)) * (re + 1j * im)


@pytest.mark.parametrize("z", [-60e-6, -10e-6, 0.0, 25e-6])
@pytest.mark.parametrize("r", [0.0, 0.4e-6, 2.3e-6])
def test_debye_matches_adaptive_quadrature(z, r):
    q = DebyeQuadrature(CFG)
    got = q.radial_profile([r], [z])[0, 0]
    k, a = CFG.wavenumber, CFG.alpha
    ref = _debye_reference(k * r * math.sin(a), 4 * k * z * math.sin(a / 2) ** 2, a)
    assert abs(got - ref) < 1e-10


def test_debye_quadrature_refinement():
    # halving the node count changes the field by far less than its peak
    r = np.linspace(0, 5e-6, 41)
    zs = [-60e-6, -34e-6, -10e-6]
    fine = DebyeQuadrature(CFG, 1024).radial_profile(r, zs)
    for rule, nodes, tol in (("gauss", 512, 1e-10), ("simpson", 512, 1e-3)):
        coarse = DebyeQuadrature(CFG, nodes, rule).radial_profile(r, zs)
        assert np.abs(coarse - fine).max() / np.abs(fine).max() < tol


def test_debye_field_radial_symmetry():
    grid = SamplingGrid(31, 10e-6)
    u = debye_field((0, 0, -20e-6), grid, CFG).values
    assert np.allclose(u, u[::-1, ::-1], atol=0, rtol=0)
    assert np.allclose(u, u.T, atol=0, rtol=0)


def test_debye_rejects_out_of_range_depth():
    with pytest.raises(ConfigurationError):
        debye_field((0, 0, 1.0), SamplingGrid(3, 10e-6), CFG)


def test_simpson_needs_even_intervals():
    with pytest.raises(ConfigurationError):
        DebyeQuadrature(CFG, 511, "simpson")


# --- lenslets and masks -----------------------------------------------------


def test_lenslet_phase_is_periodic_and_centred():
    grid = SamplingGrid(151, 10e-6)
    phi = lenslet_modulation(grid, CFG).values
    K = CFG.samples_per_lenslet
    assert np.allclose(phi[:, K:], phi[:, :-K], atol=1e-15)
    c = grid.n // 2
    assert phi[c, c] == pytest.approx(1.0)
    x = 5 * 10e-6
    assert phi[c, c + 5] == pytest.approx(np.exp(-1j * CFG.wavenumber * x ** 2 / (2 * CFG.lenslet_focal)))


def test_lenslet_cells_handle_even_sample_counts():
    cfg = OpticalSystemConfig(lenslet_pitch=160e-6, lenslet_focal=1e-3, psf_samples=33)
    grid = SamplingGrid(33, 10e-6)
    phi = lenslet_modulation(grid, cfg).values
    assert np.allclose(phi[:, 16:], phi[:, :-16])
    assert np.all(np.abs(np.abs(phi) - 1) < 1e-15)


def test_phase_mask_values_uniform():
    tile = mask_tile("random_phase", 11, 400)
    beta = -np.angle(tile) / np.pi
    assert np.all(np.abs(np.abs(tile) - 1) < 1e-14)
    assert beta.min() >= -0.5 - 1e-12 and beta.max() <= 0.5 + 1e-12
    assert stats.kstest(beta.ravel(), stats.uniform(loc=-0.5, scale=1).cdf).pvalue > 1e-3


def test_amplitude_masks():
    b = mask_tile("random_amplitude", 2, 100)
    assert set(np.unique(b.real)) <= {0.0, 1.0}
    assert abs(b.real.mean() - 0.5) < 0.03
    u = mask_tile("random_amplitude", 2, 100, law="uniform").real
    assert 0 <= u.min() and u.max() < 1


def test_mask_seeds_and_kinds():
    assert np.array_equal(mask_tile("random_phase", 4, 15), mask_tile("random_phase", 4, 15))
    assert not np.array_equal(mask_tile("random_phase", 4, 15), mask_tile("random_phase", 5, 15))
    assert np.array_equal(mask_tile("none", 0, 3), np.ones((3, 3)))


def test_mask_replicated_per_lenslet():
    grid = SamplingGrid(151, 10e-6)
    m = random_mask(MaskSpec("random_phase", 1), grid, CFG).values
    K = CFG.samples_per_lenslet
    assert np.array_equal(m[K:, :], m[:-K, :])
    assert np.array_equal(m[:, K:], m[:, :-K])


def test_sensor_mask_independent_stream():
    grid = SamplingGrid(45, 10e-6)
    assert sensor_mask(MaskSpec(), grid, CFG) is None
    s = sensor_mask(MaskSpec("random_amplitude", 1, sensor_seed=1), grid, CFG).values
    lens = random_mask(MaskSpec("random_amplitude", 1), grid, CFG).values.real
    assert not np.array_equal(s, lens)


# --- propagation ------------------------------------------------------------


def _band_limited(rng, n, dx, lam, frac=0.6):
    f = np.fft.fftfreq(n, dx)
    keep = (lam * f[:, None]) ** 2 + (lam * f[None, :]) ** 2 < frac ** 2
    spec = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) * keep
    return np.fft.ifft2(spec)


def test_propagation_conserves_energy_and_inverts(rng):
    n, dx = 151, 10e-6
    for _ in range(5):
        u = ComplexField(_band_limited(rng, n, dx, CFG.wavelength), dx)
        fwd = propagate(u, CFG.lenslet_focal, CFG)
        e0, e1 = np.sum(np.abs(u.values) ** 2), np.sum(np.abs(fwd.values) ** 2)
        assert abs(e1 - e0) / e0 <= 1e-9
        back = propagate(fwd, -CFG.lenslet_focal, CFG)
        assert np.abs(back.values - u.values).max() / np.abs(u.values).max() <= 1e-9


def test_propagation_zero_distance_identity(rng):
    u = ComplexField(_band_limited(rng, 64, 10e-6, CFG.wavelength), 10e-6)
    assert np.allclose(propagate(u, 0.0, CFG).values, u.values, atol=1e-13)


def test_propagation_composes(rng):
    u = ComplexField(_band_limited(rng, 151, 10e-6, CFG.wavelength), 10e-6)
    a = propagate(propagate(u, 1e-3, CFG), 2e-3, CFG)
    b = propagate(u, 3e-3, CFG)
    assert np.abs(a.values - b.values).max() < 1e-10 * np.abs(u.values).max()


def test_transfer_function_zeroes_evanescent():
    H = transfer_function(64, 0.2e-6, 1e-3, 532e-9)
    f = np.fft.fftfreq(64, 0.2e-6)
    ev = (532e-9 * f[:, None]) ** 2 + (532e-9 * f[None, :]) ** 2 >= 1
    assert ev.any() and np.all(H[ev] == 0)
    assert np.allclose(np.abs(H[~ev]), 1)


def test_propagation_enforces_sampling():
    u = ComplexField(np.ones((151, 151), complex), 3e-6)
    with pytest.raises(SamplingError):
        propagate(u, 3e-3, CFG)


# --- point PSFs -------------------------------------------------------------


@pytest.fixture(scope="module")
def reference_clear_model():
    return PsfModel(CFG, MaskSpec("none"), nodes=256)


@pytest.mark.parametrize("z", [-60e-6, -34e-6, -10e-6])
def test_clear_psf_rotation_symmetry(reference_clear_model, z):
    psf = reference_clear_model.point_psf((0, 0, z))
    assert psf.shape == (151, 151)
    assert psf.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.abs(psf - psf[::-1, ::-1]).max() < 1e-12 * psf.max()
    assert np.abs(psf - psf.T).max() < 1e-12 * psf.max()


def test_psf_shift_by_one_lenslet_is_periodic():
    # emitter moved one lenslet period in object space, window moved one lenslet on the sensor
    spec = MaskSpec("random_phase", 2)
    d = CFG.lenslet_pitch
    a = compute_point_psf((0.5e-6, -0.25e-6, -34e-6), CFG, spec, nodes=128)
    b = compute_point_psf((0.5e-6 + d / CFG.magnification, -0.25e-6, -34e-6), CFG, spec,
                          window_center=(d, 0.0), nodes=128)
    assert np.abs(a - b).max() < 1e-10 * a.max()


def test_psf_nonnegative_unit_sum():
    psf = compute_point_psf((0.25e-6, 0, -10e-6), CFG, MaskSpec("random_phase", 1), nodes=128)
    assert psf.min() >= 0 and psf.sum() == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2 ** 31), st.floats(-60e-6, -10e-6))
def test_phase_mask_psf_differs_by_seed(seed, z):
    cfg = OpticalSystemConfig(lenslet_pitch=80e-6, lenslet_focal=1e-3, psf_samples=7)
    a = compute_point_psf((0, 0, z), cfg, MaskSpec("random_phase", seed), nodes=64)
    b = compute_point_psf((0, 0, z), cfg, MaskSpec("random_phase", seed + 1), nodes=64)
    assert a.shape == (7, 7) and not np.allclose(a, b)


def test_oversampled_psf_bins_to_sensor():
    cfg = OpticalSystemConfig(lenslet_pitch=90e-6, lenslet_focal=1e-3, mask_pixel=10e-6,
                              sensor_pixel=30e-6, psf_samples=21, oversample=3)
    psf = compute_point_psf((0, 0, -10e-6), cfg, MaskSpec("random_phase", 1), nodes=64)
    assert psf.shape == (7, 7) and psf.sum() == pytest.approx(1.0)
