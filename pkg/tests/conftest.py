import numpy as np
import pytest

from kissgev.array import circular_array, tdoa
from kissgev.stft import StftConfig
from kissgev.wavio import AudioClip

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def uca8():
    return circular_array(8, 0.0463)


def fractional_delay(x, delay):
    """Delay ``x`` by a (fractional) number of samples via a frequency-domain shift
    on a zero-padded copy; circular wrap is pushed into the padding."""
    n = len(x)
    pad = 1 << int(np.ceil(np.log2(n + 64)))
    spec = np.fft.rfft(x, pad)
    f = np.fft.rfftfreq(pad)
    return np.fft.irfft(spec * np.exp(-2j * np.pi * f * delay), pad)[:n]


def plane_wave(signal, geometry, doa, fs=16000):
    """Anechoic far-field capture: each mic hears ``signal`` shifted by its TDoA."""
    tau = tdoa(geometry, doa, fs)
    return np.stack([fractional_delay(signal, t) for t in tau])


def random_spec_frames(rng, d, t, f):
    return rng.standard_normal((d, t, f)) + 1j * rng.standard_normal((d, t, f))


def random_psd(rng, d, rank=None):
    rank = rank or d
    a = rng.standard_normal((d, rank)) + 1j * rng.standard_normal((d, rank))
    return a @ a.conj().T


@pytest.fixture
def default_config():
    return StftConfig()


def make_clip(samples, fs=16000):
    return AudioClip(np.atleast_2d(samples), fs)
