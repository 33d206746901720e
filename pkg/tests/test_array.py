import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import plane_wave
from kissgev.array import (ArrayGeometry, circular_array, default_geometry, doa_from_angles,
                           doa_from_vector, load_geometry, steering, tdoa)
from kissgev.beamform import delay_and_sum
from kissgev.errors import GeometryError, ParameterError
from kissgev.maskgen import make_filterbank, power_ratio
from kissgev.stft import stft
from kissgev.wavio import AudioClip


def test_mic_at_origin_has_zero_delay():
    geo = ArrayGeometry([[0, 0, 0], [0.1, 0, 0]])
    for az in (0, 73, 180, 251):
        assert tdoa(geo, doa_from_angles(az, 10), 16000)[0] == 0.0


def test_two_mic_endfire_delays():
    geo = ArrayGeometry([[0.05, 0, 0], [-0.05, 0, 0]], 343.0)
    tau = tdoa(geo, np.array([1.0, 0, 0]), 16000)
    np.testing.assert_allclose(tau, [-2.3324, 2.3324], atol=1e-4)
    np.testing.assert_allclose(tau, [-0.05 * 16000 / 343, 0.05 * 16000 / 343], rtol=1e-12)


def test_broadside_equal_delays():
    geo = ArrayGeometry([[0.05, 0, 0], [-0.05, 0, 0]])
    tau = tdoa(geo, np.array([0.0, 1.0, 0.0]), 16000)
    assert tau[0] == tau[1]


def test_tdoa_translation_shifts_by_constant(uca8):
    u = doa_from_angles(33, 12)
    moved = ArrayGeometry(uca8.mic_positions + [0.3, -0.2, 0.1])
    diff = tdoa(moved, u, 16000) - tdoa(uca8, u, 16000)
    np.testing.assert_allclose(diff, diff[0], atol=1e-12)


def test_tdoa_rejects_non_unit_doa(uca8):
    with pytest.raises(ParameterError):
        tdoa(uca8, np.array([1.0, 1.0, 0.0]), 16000)


def test_steering_examples():
    w = steering(np.array([0.0, 256.0]), 512)
    np.testing.assert_array_equal(w.weights[0], 1.0)
    assert w.weights[1, 1] == pytest.approx(-1.0)
    np.testing.assert_array_equal(w.weights[:, 0], 1.0)


def test_steering_rejects_nonfinite():
    with pytest.raises(ParameterError):
        steering(np.array([0.0, np.inf]), 512)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-40, 40), min_size=2, max_size=16), st.sampled_from([256, 512, 1024]))
def test_steering_unit_modulus(taus, n):
    w = steering(np.array(taus), n).weights
    assert np.max(np.abs(np.abs(w) - 1.0)) <= 1e-12
    np.testing.assert_array_equal(w[:, 0], 1.0)


def test_doa_helpers():
    np.testing.assert_allclose(doa_from_angles(90, 0), [0, 1, 0], atol=1e-15)
    np.testing.assert_allclose(doa_from_angles(0, 90), [0, 0, 1], atol=1e-15)
    np.testing.assert_allclose(doa_from_vector([3, 0, 4]), [0.6, 0, 0.8])
    with pytest.raises(ParameterError):
        doa_from_vector([0, 0, 0])


@pytest.mark.parametrize("mics,c", [
    ([[0, 0, 0]], 343.0),
    ([[0, 0, 0], [0, 0, 0]], 343.0),
    ([[0, 0, 0], [0.1, 0, 0]], 250.0),
    ([[0, 0], [1, 0]], 343.0),
])
def test_geometry_validation(mics, c):
    with pytest.raises(GeometryError):
        ArrayGeometry(mics, c)


def test_geometry_json_roundtrip(tmp_path, uca8):
    path = tmp_path / "g.json"
    path.write_text(json.dumps(uca8.to_json()))
    geo = load_geometry(path)
    np.testing.assert_array_equal(geo.mic_positions, uca8.mic_positions)
    assert geo.speed_of_sound == 343.0
    path.write_text(json.dumps({"speed_of_sound": 343}))
    with pytest.raises(GeometryError):
        load_geometry(path)


def test_default_geometry_is_uca8():
    geo = default_geometry()
    assert geo.num_mics == 8
    np.testing.assert_allclose(np.linalg.norm(geo.mic_positions, axis=1), 0.0463, atol=1e-6)
    np.testing.assert_allclose(geo.mic_positions, circular_array(8, 0.0463).mic_positions, atol=1e-6)


def test_ds_grid_search_peaks_at_true_doa(rng, uca8):
    true_az = 137.0
    x = plane_wave(rng.standard_normal(8000), uca8, doa_from_angles(true_az))
    spec = stft(AudioClip(x, 16000))
    powers = []
    grid = np.arange(0.0, 360.0, 1.0)
    for az in grid:
        w = steering(tdoa(uca8, doa_from_angles(az), 16000), 512)
        powers.append(np.sum(np.abs(delay_and_sum(spec, w).frames) ** 2))
    assert abs(grid[int(np.argmax(powers))] - true_az) <= 1.0


def test_true_steering_gives_unit_ratio(rng, uca8):
    u = doa_from_angles(-60, 20)
    x = plane_wave(rng.standard_normal(8000), uca8, u)
    spec = stft(AudioClip(x, 16000))
    ratio = power_ratio(spec, steering(tdoa(uca8, u, 16000), 512), make_filterbank(512, 100))
    assert np.all(ratio.band[:, 2:-2] >= 0.99)


def test_steering_aligns_narrowband_plane_wave(uca8):
    k = 40
    u = doa_from_angles(75, -10)
    t = np.arange(8192)
    x = plane_wave(np.cos(2 * np.pi * k * t / 512), uca8, u)
    spec = stft(AudioClip(x, 16000))
    w = steering(tdoa(uca8, u, 16000), 512)
    summed = np.abs(np.einsum("d,dt->t", w.weights[:, k], spec.frames[:, :, k]))
    ref = 8 * np.abs(spec.frames[0, :, k])
    np.testing.assert_allclose(summed[2:-2], ref[2:-2], rtol=0.01)
