"""
Procedural source signals for corpus-free experiments.

These are not meant to sound natural; they reproduce the properties the
enhancement pipeline cares about: voiced harmonic segments with formant
structure, high-frequency fricative bursts and pauses for speech; sustained
polyphonic harmonic tones for music; stationary coloured noise with
non-stationary events for ambient noise.
"""

from pathlib import Path

import numpy as np
from scipy.signal import butter, lfilter, sosfilt

from .wavio import AudioClip, write_wav

__all__ = ["speech_like", "music_like", "ambient_like", "make_corpus"]

_VOWELS = (
    (730, 1090, 2440),
    (270, 2290, 3010),
    (300, 870, 2240),
    (530, 1840, 2480),
    (570, 840, 2410),
    (440, 1020, 2240),
    (660, 1720, 2410),
)

TARGET_RMS = 0.05
_FORMANT_GAINS = (1.0, 1.6, 2.0)


def _highpass(x, fs, cutoff=60.0):
    return sosfilt(butter(2, cutoff, btype="highpass", fs=fs, output="sos"), x)


def _normalize(x, rms=TARGET_RMS):
    level = np.sqrt(np.mean(x**2))
    return x * (rms / level) if level > 0 else x


def _resonator(x, freq, bandwidth, fs):
    r = np.exp(-np.pi * bandwidth / fs)
    theta = 2.0 * np.pi * freq / fs
    a = [1.0, -2.0 * r * np.cos(theta), r * r]
    return lfilter([1.0 - r], a, x)


def _envelope(n, attack, release):
    env = np.ones(n)
    a, r = min(attack, n // 2), min(release, n // 2)
    if a:
        env[:a] = 0.5 - 0.5 * np.cos(np.pi * np.arange(a) / a)
    if r:
        env[n - r :] = 0.5 + 0.5 * np.cos(np.pi * np.arange(r) / r)
    return env


def _vowel(n, fs, f0, rng):
    t = np.arange(n) / fs
    contour = f0 * (1.0 + rng.uniform(-0.15, 0.15) * t / max(t[-1], 1e-9)
                    + 0.03 * np.sin(2 * np.pi * rng.uniform(3, 6) * t))
    phase = np.cumsum(contour / fs)
    pulses = np.diff(np.floor(phase), prepend=0.0)
    # glottal pulse shaping (two real poles) followed by lip radiation (zero at DC)
    source = lfilter([1.0, -0.9], [1.0, -0.95], lfilter([1.0], [1.0, -0.9], pulses))
    source += 0.02 * rng.standard_normal(n)
    formants = _VOWELS[rng.integers(len(_VOWELS))]
    out = np.zeros(n)
    for k, f in enumerate(formants):
        out += _resonator(source, f * rng.uniform(0.93, 1.07), 60.0 + 40.0 * k, fs) * _FORMANT_GAINS[k]
    return _normalize(out, 1.0) * _envelope(n, int(0.02 * fs), int(0.03 * fs))


def _fricative(n, fs, rng):
    lo = rng.uniform(2500.0, 4000.0)
    hi = min(rng.uniform(6000.0, 7800.0), 0.49 * fs)
    sos = butter(4, [lo, hi], btype="bandpass", fs=fs, output="sos")
    noise = _normalize(sosfilt(sos, rng.standard_normal(n)), 1.0)
    return noise * _envelope(n, int(0.01 * fs), int(0.02 * fs))


def speech_like(duration, fs=16000, seed=0):
    """Syllabic voiced/unvoiced sequence with inter-word pauses."""
    rng = np.random.default_rng(seed)
    total = int(duration * fs)
    out = np.zeros(total)
    f0 = rng.uniform(90.0, 230.0)
    pos = int(rng.uniform(0.05, 0.3) * fs)
    while pos < total - int(0.1 * fs):
        for _ in range(rng.integers(1, 4)):
            parts = []
            if rng.random() < 0.5:
                parts.append(0.14 * _fricative(int(rng.uniform(0.04, 0.12) * fs), fs, rng))
            parts.append(_vowel(int(rng.uniform(0.08, 0.25) * fs), fs, f0, rng))
            if rng.random() < 0.3:
                parts.append(0.1 * _fricative(int(rng.uniform(0.03, 0.10) * fs), fs, rng))
            syllable = np.concatenate(parts) * rng.uniform(0.5, 1.0)
            end = min(pos + len(syllable), total)
            out[pos:end] += syllable[: end - pos]
            pos = end
        pos += int(rng.uniform(0.05, 0.3 if rng.random() < 0.8 else 0.45) * fs)
    return _normalize(_highpass(out, fs))


def music_like(duration, fs=16000, seed=0):
    """Sustained polyphonic harmonic notes on a diatonic scale with sparse percussion."""
    rng = np.random.default_rng(seed)
    total = int(duration * fs)
    out = np.zeros(total)
    root = 110.0 * 2 ** (rng.integers(0, 12) / 12.0)
    scale = np.array([0, 2, 4, 5, 7, 9, 11])
    beat = rng.uniform(0.25, 0.5)
    for voice in range(rng.integers(2, 4)):
        pos = 0
        octave = 2 ** voice
        while pos < total:
            n = int(beat * rng.choice([1, 2, 2, 4]) * fs)
            step = scale[rng.integers(len(scale))]
            f = root * octave * 2 ** (step / 12.0)
            t = np.arange(n) / fs
            tone = np.zeros(n)
            for k in range(1, int(0.45 * fs / f) + 1):
                tone += np.sin(2 * np.pi * k * f * t + rng.uniform(0, 2 * np.pi)) / k**1.3
            tone *= _envelope(n, int(0.01 * fs), int(0.1 * fs)) * np.exp(-t * rng.uniform(0.5, 2.0))
            end = min(pos + n, total)
            out[pos:end] += tone[: end - pos] / (1 + voice)
            pos = end
    hits = rng.uniform(0, duration, size=int(duration / beat / 2))
    for h in hits:
        start = int(h * fs)
        n = min(int(0.15 * fs), total - start)
        if n <= 0:
            continue
        t = np.arange(n) / fs
        out[start : start + n] += 0.3 * rng.standard_normal(n) * np.exp(-t * 40.0)
    return _normalize(_highpass(out, fs))


def ambient_like(duration, fs=16000, seed=0):
    """Coloured stationary noise plus hum, swells and transients."""
    rng = np.random.default_rng(seed)
    total = int(duration * fs)
    white = rng.standard_normal(total)
    spectrum = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(total, 1.0 / fs)
    exponent = rng.uniform(0.0, 1.0)
    spectrum[1:] /= (freqs[1:] / 100.0) ** (exponent / 2)
    spectrum[0] = 0.0
    out = np.fft.irfft(spectrum, n=total)
    out = _normalize(out, 1.0)
    t = np.arange(total) / fs
    if rng.random() < 0.5:
        hum = rng.choice([50.0, 60.0])
        out += sum(0.3 / k * np.sin(2 * np.pi * k * hum * t) for k in range(1, 6))
    if rng.random() < 0.6:
        rate = rng.uniform(0.2, 1.5)
        out *= 1.0 + 0.7 * np.sin(2 * np.pi * rate * t + rng.uniform(0, 2 * np.pi))
    for _ in range(rng.integers(0, 8)):
        start = rng.integers(0, total)
        n = min(int(rng.uniform(0.02, 0.3) * fs), total - start)
        burst = rng.standard_normal(n) * np.exp(-np.arange(n) / (0.2 * n + 1))
        out[start : start + n] += rng.uniform(1.0, 4.0) * burst
    return _normalize(_highpass(out, fs))


GENERATORS = {"speech": speech_like, "music": music_like, "ambient": ambient_like}


def make_corpus(out_dir, per_type=20, duration=3.0, fs=16000, seed=0):
    """
    Write a synthetic corpus laid out as ``target/`` and
    ``interference/{ambient,music,speech}/`` (float-32 mono WAVs).

    Target and interfering speech use disjoint seeds.
    """
    root = Path(out_dir)
    jobs = [("target", "speech", 0)]
    jobs += [(f"interference/{name}", name, 1 + k) for k, name in enumerate(sorted(GENERATORS))]
    written = []
    for subdir, kind, stream in jobs:
        folder = root / subdir
        folder.mkdir(parents=True, exist_ok=True)
        for i in range(per_type):
            x = GENERATORS[kind](duration, fs, seed=(seed, stream, i))
            path = folder / f"{kind}_{i:03d}.wav"
            write_wav(AudioClip(x, fs), path, "float32")
            written.append(path)
    return written
