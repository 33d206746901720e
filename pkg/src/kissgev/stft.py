"""
Short-time Fourier transform with sqrt-Hann analysis/synthesis windows.

Spectrogram layout is ``(channels, frames, bins)`` with ``bins = N/2 + 1``.
"""

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ParameterError, ShapeError
from .wavio import AudioClip

__all__ = ["StftConfig", "MultichannelSpectrogram", "stft", "istft"]


def _sqrt_hann(n):
    # periodic Hann: sums to a constant under hops dividing n/2
    return np.sqrt(0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n))


@dataclass(frozen=True)
class StftConfig:
    frame_size: int = 512
    hop: int = 256
    window: str = "sqrt-hann"

    def __post_init__(self):
        n, hop = self.frame_size, self.hop
        if n <= 0 or n % 2:
            raise ParameterError(f"frame_size must be a positive even integer, got {n}")
        if hop <= 0 or n % hop:
            raise ParameterError(f"hop must divide frame_size ({n}), got {hop}")
        if self.window != "sqrt-hann":
            raise ParameterError(f"unsupported window {self.window!r}")
        ola = self._overlap_add_sum()
        if np.max(np.abs(ola - 1.0)) > 1e-10:
            raise ParameterError(
                f"window pair violates constant overlap-add for frame_size={n}, hop={hop}"
            )

    @property
    def num_bins(self):
        return self.frame_size // 2 + 1

    @property
    def analysis_window(self):
        return _sqrt_hann(self.frame_size)

    @property
    def synthesis_window(self):
        w = _sqrt_hann(self.frame_size)
        return w / self._ola_gain()

    def _ola_gain(self):
        w2 = _sqrt_hann(self.frame_size) ** 2
        return w2.reshape(-1, self.hop).sum(axis=0).mean()

    def _overlap_add_sum(self):
        prod = self.analysis_window * self.synthesis_window
        return prod.reshape(-1, self.hop).sum(axis=0)

    def num_frames(self, num_samples):
        return (num_samples - self.frame_size) // self.hop + 1

    def bin_frequencies(self, sample_rate):
        return np.arange(self.num_bins) * sample_rate / self.frame_size


@dataclass
class MultichannelSpectrogram:
    """Complex STFT frames ``Y_d(t, f)``.

    ``pad_front`` and ``length`` record the padding applied by
    ``stft(..., pad=True)`` so that :func:`istft` can undo it.
    """

    frames: np.ndarray
    config: StftConfig
    sample_rate: int
    pad_front: int = 0
    length: int = None

    def __post_init__(self):
        frames = np.asarray(self.frames)
        if frames.ndim == 2:
            frames = frames[None]
        if frames.ndim != 3 or frames.shape[-1] != self.config.num_bins:
            raise ShapeError(
                f"frames must have shape (D, T, {self.config.num_bins}), got {frames.shape}"
            )
        self.frames = frames.astype(np.complex128, copy=False)

    @property
    def num_channels(self):
        return self.frames.shape[0]

    @property
    def num_frames(self):
        return self.frames.shape[1]

    @property
    def num_bins(self):
        return self.frames.shape[2]

    def channel(self, index):
        return MultichannelSpectrogram(
            self.frames[index : index + 1], self.config, self.sample_rate, self.pad_front, self.length
        )

    def with_frames(self, frames):
        """Same config and padding, new frame data."""
        return MultichannelSpectrogram(
            frames, self.config, self.sample_rate, self.pad_front, self.length
        )


def stft(clip, config=StftConfig(), pad=False):
    """
    Analyse every channel of ``clip``.

    Without padding the clip yields ``floor((T_s - N) / hop) + 1`` frames and
    the first/last ``N - hop`` samples are not perfectly reconstructed. With
    ``pad=True`` zeros are added on both sides so every input sample is, and
    :func:`istft` trims the result back to the input length.
    """
    n, hop = config.frame_size, config.hop
    x = clip.samples
    length = None
    pad_front = 0
    if pad:
        length = x.shape[1]
        pad_front = n - hop
        total = pad_front + length + (n - hop)
        total += (-(total - n)) % hop
        x = np.pad(x, ((0, 0), (pad_front, total - pad_front - length)))
    if x.shape[1] < n:
        raise ShapeError(f"clip has {x.shape[1]} samples, shorter than one frame ({n})")
    segments = sliding_window_view(x, n, axis=-1)[:, ::hop, :]
    frames = np.fft.rfft(segments * config.analysis_window, axis=-1)
    return MultichannelSpectrogram(frames, config, clip.sample_rate, pad_front, length)


def istft(spec):
    """Weighted overlap-add synthesis; returns ``(T - 1) * hop + N`` samples
    unless the spectrogram was produced with padding."""
    config = spec.config
    n, hop = config.frame_size, config.hop
    num_ch, num_frames, _ = spec.frames.shape
    segments = np.fft.irfft(spec.frames, n=n, axis=-1) * config.synthesis_window
    out = np.zeros((num_ch, (num_frames - 1) * hop + n))
    for t in range(num_frames):
        out[:, t * hop : t * hop + n] += segments[:, t]
    if spec.length is not None:
        out = out[:, spec.pad_front : spec.pad_front + spec.length]
    return AudioClip(out, spec.sample_rate)
