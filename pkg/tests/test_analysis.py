import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lfcrypt import DeconvSettings, Volume, normalized_correlation, plane_correlations, run_attack_suite
from lfcrypt.analysis import object_correlations
from lfcrypt.errors import ConfigurationError

from conftest import TINY_Z


def _pattern(seed, n=24):
    r = np.random.default_rng(seed)
    a = np.zeros((n, n))
    a[5:15, 6:12] = 1
    return a + 0.1 * r.random((n, n))


def test_self_correlation_is_one():
    a = _pattern(0)
    r = normalized_correlation(a, a)
    assert r.peak == pytest.approx(1.0, abs=1e-12) and r.offset == (0, 0)


def test_shift_is_found():
    a = _pattern(1)
    b = np.roll(a, (3, -2), axis=(0, 1))
    r = normalized_correlation(a, b)
    assert r.offset == (3, -2)
    assert r.peak > 0.95


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 1000), st.floats(0.01, 100), st.floats(-50, 50), st.floats(0.01, 100), st.floats(-5, 5))
def test_affine_invariance(seed, s1, c1, s2, c2):
    a, b = _pattern(seed, 12), _pattern(seed + 1, 12)
    base = normalized_correlation(a, b).peak
    assert normalized_correlation(s1 * a + c1, s2 * b + c2).peak == pytest.approx(base, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 1000))
def test_symmetry(seed):
    a, b = _pattern(seed, 12), _pattern(seed + 7, 12)
    ab, ba = normalized_correlation(a, b), normalized_correlation(b, a)
    assert ab.peak == pytest.approx(ba.peak, abs=1e-12)
    assert ab.offset == tuple(-o for o in ba.offset) or ab.peak == pytest.approx(ba.peak, abs=1e-12)
    assert -1 - 1e-12 <= ab.peak <= 1


def test_noise_null_distribution():
    # uniform noise against a structured reference: mean peak C stays small
    ref = np.zeros((128, 128))
    ref[30:90, 40:60] = 1
    rng = np.random.default_rng(5)
    peaks = [normalized_correlation(ref, rng.random((128, 128)), max_shift=4).peak for _ in range(100)]
    assert np.mean(peaks) < 0.2


def test_constant_reference_rejected():
    with pytest.raises(ConfigurationError):
        normalized_correlation(np.ones((4, 4)), np.random.default_rng(0).random((4, 4)))
    with pytest.raises(ConfigurationError):
        normalized_correlation(np.ones((4, 4)), np.ones((4, 5)))


def test_zero_reconstruction_gives_zero():
    assert normalized_correlation(_pattern(0), np.zeros((24, 24))).peak == 0.0


def test_plane_and_object_tables():
    vol = np.zeros((3, 24, 24))
    vol[0] = _pattern(0)
    vol[2] = _pattern(2)
    ref = Volume(vol, 1e-6, (0, 1e-6, 2e-6))
    table = plane_correlations(ref, ref)
    assert sorted(table) == [0, 2]
    obj = object_correlations(ref, ref, {"a": (0, (0, 0, 20, 20))})
    assert obj["a"]["C"] == pytest.approx(1.0)


def test_attack_suite_structure(tiny_key):
    vol = np.zeros((2, 4, 4))
    vol[0, 1:3, 1] = 1
    vol[1, 0, 0:3] = 1
    scene = Volume(vol, 1e-6, TINY_Z)
    rep = run_attack_suite(scene, tiny_key, DeconvSettings(iterations=10), occlusion_fractions=(0.0, 0.25),
                           perturbation_fractions=(0.05,), sensor_shape=(8, 8), max_shift=1)
    assert rep.names() == ["baseline", "occlusion-0", "occlusion-0.25", "perturbed-0.05"]
    base, occ0 = rep["baseline"], rep["occlusion-0"]
    assert {k: v.peak for k, v in base.correlations.items()} == {k: v.peak for k, v in occ0.correlations.items()}
    assert np.array_equal(base.reconstruction.values, occ0.reconstruction.values)
    assert rep["occlusion-0.25"].params["blocked_pixels"] == 16
    lines = [json.loads(x) for x in rep.lines()]
    assert lines[0]["entry"] == "baseline" and set(lines[0]["C"]) == {"0", "1"}
    with pytest.raises(KeyError):
        rep["missing"]
