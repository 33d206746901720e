import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import plane_wave
from kissgev.array import doa_from_angles
from kissgev.errors import ShapeError
from kissgev.oracle import ideal_ratio_mask, oracle_gev_enhance, oracle_masks
from kissgev.wavio import AudioClip


def test_irm_examples():
    x = np.array([[1.0, 2.0, 0.0, 3j]])
    n = np.array([[0.0, 2.0, 0.0, 1.0]])
    irm = ideal_ratio_mask(x, n).values[0]
    np.testing.assert_allclose(irm, [1.0, 1 / np.sqrt(2), 0.0, np.sqrt(0.9)])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.0, 1e-3))
def test_irm_range_and_complementarity(seed, sparsity):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((6, 9)) + 1j * rng.standard_normal((6, 9))
    n = rng.standard_normal((6, 9)) * (rng.random((6, 9)) > 0.3)
    a = ideal_ratio_mask(x, n).values
    b = ideal_ratio_mask(n, x).values
    assert np.all((a >= 0) & (a <= 1))
    occupied = (np.abs(x) > 0) | (np.abs(n) > 0)
    np.testing.assert_allclose((a**2 + b**2)[occupied], 1.0, atol=1e-12)
    _, noise = oracle_masks(x, n)
    assert np.all((noise.values >= 0) & (noise.values <= 1))
    np.testing.assert_allclose(noise.values, 1.0 - a)


def test_noise_mask_rules():
    x, n = np.array([[3.0, 0.0]]), np.array([[4.0, 1.0]])
    _, swapped = oracle_masks(x, n, noise_mask="swapped")
    np.testing.assert_allclose(swapped.values, [[0.8, 1.0]])
    _, comp = oracle_masks(x, n, exponent=1.0)
    np.testing.assert_allclose(comp.values, [[16 / 25, 1.0]])
    with pytest.raises(ValueError):
        oracle_masks(x, n, noise_mask="other")


def test_irm_shape_mismatch():
    with pytest.raises(ShapeError):
        ideal_ratio_mask(np.ones((3, 4)), np.ones((3, 5)))


def test_zero_interference_preserves_target(rng, uca8):
    u = doa_from_angles(60, 10)
    x = plane_wave(rng.standard_normal(16000), uca8, u)
    target = AudioClip(x, 16000)
    silent = AudioClip(np.zeros_like(x), 16000)
    out = oracle_gev_enhance(target, target, silent, uca8, u).samples[0]
    corr = np.dot(out, x[0]) / (np.linalg.norm(out) * np.linalg.norm(x[0]))
    assert corr >= 0.95


def test_oracle_deterministic_and_beats_mixture(rng, uca8):
    n = 24000
    gate = (np.sin(2 * np.pi * 2 * np.arange(n) / 16000) > 0).astype(float)
    tgt = plane_wave(rng.standard_normal(n) * gate, uca8, doa_from_angles(0))
    intf = plane_wave(rng.standard_normal(n), uca8, doa_from_angles(150))
    mix = AudioClip(tgt + intf, 16000)
    args = (mix, AudioClip(tgt, 16000), AudioClip(intf, 16000), uca8, doa_from_angles(0))
    a, b = oracle_gev_enhance(*args).samples, oracle_gev_enhance(*args).samples
    assert a.tobytes() == b.tobytes()

    def si(est, ref):
        proj = np.dot(est, ref) / np.dot(ref, ref) * ref
        return 10 * np.log10(np.sum(proj**2) / np.sum((est - proj) ** 2))

    assert si(a[0], tgt[0]) > si(mix.samples[0], tgt[0]) + 6


def test_oracle_requires_aligned_references(rng, uca8):
    x = rng.standard_normal((8, 4000))
    with pytest.raises(ShapeError):
        oracle_gev_enhance(AudioClip(x, 16000), AudioClip(x[:, :3000], 16000), AudioClip(x, 16000),
                           uca8, doa_from_angles(0))
