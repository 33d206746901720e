import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import plane_wave, random_spec_frames
from kissgev.array import doa_from_angles, steering, tdoa
from kissgev.errors import ParameterError, ShapeError
from kissgev.maskgen import (Filterbank, RatioMap, TFMask, binary_masks, estimate_masks,
                             make_filterbank, power_ratio, thresholds)
from kissgev.stft import MultichannelSpectrogram, StftConfig, stft
from kissgev.wavio import AudioClip

CFG = StftConfig()


def _spec(frames, cfg=CFG):
    return MultichannelSpectrogram(frames, cfg, 16000)


def _unit_steering(d, f):
    return np.ones((d, f), complex)


def test_default_filterbank_bounds():
    fb = make_filterbank(512, 100)
    assert fb.bounds == ((0, 99), (100, 256))
    assert fb.matrix.shape == (2, 257)


def test_separator_one():
    assert make_filterbank(512, 1).bounds == ((0, 0), (1, 256))


@pytest.mark.parametrize("sep", [0, 257, -3])
def test_separator_out_of_range(sep):
    with pytest.raises(ParameterError):
        make_filterbank(512, sep)


@settings(max_examples=50, deadline=None)
@given(st.sampled_from([16, 64, 512, 1024]), st.data())
def test_every_bin_in_exactly_one_band(n, data):
    sep = data.draw(st.integers(1, n // 2))
    h = make_filterbank(n, sep).matrix
    np.testing.assert_array_equal(h.sum(axis=0), 1.0)


def test_filterbank_rejects_gaps_and_overlaps():
    with pytest.raises(ParameterError):
        Filterbank(((0, 10), (12, 256)), 257)
    with pytest.raises(ParameterError):
        Filterbank(((0, 10), (10, 256)), 257)
    with pytest.raises(ParameterError):
        Filterbank(((1, 256),), 257)


def test_more_than_two_bands():
    fb = Filterbank.from_separators(512, [50, 100, 200])
    assert fb.num_bands == 4
    np.testing.assert_array_equal(fb.matrix.sum(axis=0), 1.0)


def test_single_channel_ratio_is_one(rng):
    y = random_spec_frames(rng, 1, 20, 257)
    r = power_ratio(_spec(y), _unit_steering(1, 257), make_filterbank(512, 100))
    np.testing.assert_allclose(r.band, 1.0, rtol=1e-12)


def test_coherent_and_cancelling_pairs(rng):
    y1 = random_spec_frames(rng, 1, 10, 257)[0]
    fb = make_filterbank(512, 100)
    same = power_ratio(_spec(np.stack([y1, y1])), _unit_steering(2, 257), fb)
    opposite = power_ratio(_spec(np.stack([y1, -y1])), _unit_steering(2, 257), fb)
    np.testing.assert_allclose(same.band, 1.0, rtol=1e-12)
    np.testing.assert_allclose(opposite.band, 0.0, atol=1e-12)


def test_random_phase_pair_mean_half(rng):
    # E|Y1 + Y2|^2 = 2|Y|^2 for independent phases, so R averages 1/2
    t, f = 10000, 257
    phases = rng.uniform(0, 2 * np.pi, size=(2, t, f))
    r = power_ratio(_spec(np.exp(1j * phases)), _unit_steering(2, f), make_filterbank(512, 100))
    assert abs(r.band.mean() - 0.5) <= 0.02


def test_zero_energy_band_gives_zero(rng):
    y = random_spec_frames(rng, 2, 4, 257)
    y[:, 1, :100] = 0.0
    r = power_ratio(_spec(y), _unit_steering(2, 257), make_filterbank(512, 100))
    assert r.band[0, 1] == 0.0 and r.band[1, 1] > 0.0


def test_power_ratio_shape_mismatch(rng):
    y = random_spec_frames(rng, 2, 4, 257)
    with pytest.raises(ShapeError):
        power_ratio(_spec(y), _unit_steering(3, 257), make_filterbank(512, 100))
    with pytest.raises(ShapeError):
        power_ratio(_spec(y), _unit_steering(2, 257), make_filterbank(256, 50))


def test_power_ratio_matches_direct_loop(rng):
    d, t = 3, 6
    y = random_spec_frames(rng, d, t, 257)
    w = np.exp(1j * rng.uniform(0, 2 * np.pi, (d, 257)))
    r = power_ratio(_spec(y), w, make_filterbank(512, 100))
    for b, (lo, hi) in enumerate([(0, 99), (100, 256)]):
        for ti in range(t):
            num = sum(abs(sum(w[k, f] * y[k, ti, f] for k in range(d))) ** 2 for f in range(lo, hi + 1))
            den = d * sum(abs(y[k, ti, f]) ** 2 for k in range(d) for f in range(lo, hi + 1))
            assert r.band[b, ti] == pytest.approx(num / den, rel=1e-12)


def test_band_constancy(rng):
    r = power_ratio(_spec(random_spec_frames(rng, 4, 30, 257)),
                    np.exp(1j * rng.uniform(0, 6, (4, 257))), make_filterbank(512, 77))
    assert np.all(r.full[:, :77] == r.full[:, :1])
    assert np.all(r.full[:, 77:] == r.full[:, 77:78])


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 8), st.integers(1, 12), st.integers(1, 256), st.integers(0, 2**31 - 1))
def test_ratio_bounded(d, t, sep, seed):
    rng = np.random.default_rng(seed)
    y = random_spec_frames(rng, d, t, 257) * rng.uniform(0, 1e3, size=(d, 1, 1))
    w = np.exp(1j * rng.uniform(0, 2 * np.pi, (d, 257)))
    r = power_ratio(_spec(y), w, make_filterbank(512, sep))
    assert np.all(r.band >= 0.0) and np.all(r.band <= 1.0 + 1e-9)


def _ratio(values, num_bins=3):
    values = np.asarray(values, dtype=np.float64)
    return RatioMap(band=values[None], full=np.repeat(values[:, None], num_bins, axis=1))


def test_threshold_example_hundred_frames():
    # upper threshold is the nearest-rank 75th percentile, sorted[ceil(75) - 1];
    # the lower one mirrors it from the top, sorted[100 - 1 - 74]
    t_x, t_n = thresholds(_ratio(np.arange(100) / 100.0), 25)
    np.testing.assert_allclose(t_x, 0.74)
    np.testing.assert_allclose(t_n, 0.25)


def test_distinct_values_select_quarter_each():
    values = np.random.default_rng(5).permutation(100) / 100.0
    r = _ratio(values)
    mx, mn = binary_masks(r, thresholds(r, 25))
    np.testing.assert_array_equal(mx.values.sum(axis=0), 25)
    np.testing.assert_array_equal(mn.values.sum(axis=0), 25)
    assert np.all(values[mx.values[:, 0] > 0] >= 0.75)
    assert np.all(values[mn.values[:, 0] > 0] <= 0.24)


def test_constant_ratio_gives_empty_masks():
    r = _ratio(np.full(40, 0.3))
    t_x, t_n = thresholds(r, 25)
    np.testing.assert_array_equal(t_x, 0.3)
    np.testing.assert_array_equal(t_n, 0.3)
    mx, mn = binary_masks(r, (t_x, t_n))
    assert not mx.values.any() and not mn.values.any()


def test_threshold_argument_checks():
    with pytest.raises(ShapeError):
        thresholds(_ratio([0.5]), 25)
    for alpha in (0, -1, 60):
        with pytest.raises(ParameterError):
            thresholds(_ratio([0.1, 0.2]), alpha)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 300), st.floats(0.5, 50.0), st.integers(0, 2**31 - 1), st.booleans())
def test_masks_disjoint_and_binary(t, alpha, seed, ties):
    rng = np.random.default_rng(seed)
    values = rng.integers(0, 5, size=(t, 4)) / 4.0 if ties else rng.random((t, 4))
    r = RatioMap(band=values.T, full=values)
    mx, mn = binary_masks(r, thresholds(r, alpha))
    assert not np.any(mx.values * mn.values)
    assert set(np.unique(mx.values)) <= {0.0, 1.0}
    assert np.all(mx.values.sum(axis=0) <= np.floor(alpha * t / 100) + 1)


def test_mask_kind_invariants():
    with pytest.raises(ValueError):
        TFMask(np.array([[0.5]]), "binary")
    with pytest.raises(ValueError):
        TFMask(np.array([[1.5]]), "soft")
    TFMask(np.array([[0.5]]), "soft")


def test_masks_invariant_to_input_scale(rng, uca8):
    x = rng.standard_normal((8, 16000))
    w = steering(tdoa(uca8, doa_from_angles(20), 16000), 512)
    base = estimate_masks(stft(AudioClip(x, 16000)), w)
    for c in (1e-4, 3.7, -250.0):
        scaled = estimate_masks(stft(AudioClip(c * x, 16000)), w)
        for a, b in zip(base, scaled):
            np.testing.assert_array_equal(a.values, b.values)
    r1 = power_ratio(stft(AudioClip(x, 16000)), w, make_filterbank(512, 100))
    r2 = power_ratio(stft(AudioClip(3.7 * x, 16000)), w, make_filterbank(512, 100))
    np.testing.assert_allclose(r1.band, r2.band, atol=1e-9)


def test_target_dominant_frames_enter_target_mask(uca8):
    rng = np.random.default_rng(7)
    fs, n = 16000, 16000 * 4
    t_doa, i_doa = doa_from_angles(10), doa_from_angles(110)
    # short target bursts (well under the 25% the target mask may take) over a
    # weaker continuous interferer
    gate = np.zeros(n)
    for start in rng.choice(np.arange(0, n - 1600, 4000), size=6, replace=False):
        gate[start : start + 1600] = 1.0
    target = plane_wave(rng.standard_normal(n) * gate, uca8, t_doa)
    interf = plane_wave(0.1 * rng.standard_normal(n), uca8, i_doa)
    spec = stft(AudioClip(target + interf, fs))
    w = steering(tdoa(uca8, t_doa, fs), 512)
    mx, _ = estimate_masks(spec, w)

    px = np.abs(stft(AudioClip(target, fs)).frames[0]) ** 2
    pn = np.abs(stft(AudioClip(interf, fs)).frames[0]) ** 2
    fb = make_filterbank(512, 100)
    hits = total = 0
    for lo, hi in fb.bounds:
        dominant = 10 * np.log10(px[:, lo:hi + 1].sum(1) / pn[:, lo:hi + 1].sum(1)) >= 10
        hits += mx.values[dominant, lo].sum()
        total += dominant.sum()
    assert total > 0
    assert hits / total >= 0.8
