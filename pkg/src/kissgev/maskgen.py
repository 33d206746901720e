"""
DoA-informed binary mask estimation.

A coarse filterbank splits the spectrum into bands. For each band and frame
the power of the delay-and-sum output is compared with the summed channel
power; frames at the top of that ratio's distribution are labelled target,
frames at the bottom are labelled interference.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ShapeError

__all__ = [
    "Filterbank",
    "RatioMap",
    "TFMask",
    "make_filterbank",
    "power_ratio",
    "thresholds",
    "binary_masks",
    "estimate_masks",
]


@dataclass(frozen=True)
class Filterbank:
    """Contiguous, non-overlapping rectangular bands.

    Attributes:
        bounds: ``((l_1, u_1), ..., (l_B, u_B))`` inclusive bin indices
        num_bins: N/2 + 1
    """

    bounds: tuple
    num_bins: int

    def __post_init__(self):
        bounds = tuple((int(lo), int(hi)) for lo, hi in self.bounds)
        if not bounds:
            raise ParameterError("filterbank needs at least one band")
        if bounds[0][0] != 0 or bounds[-1][1] != self.num_bins - 1:
            raise ParameterError(f"bands must cover bins 0..{self.num_bins - 1}, got {bounds}")
        for (lo, hi), (next_lo, _) in zip(bounds, bounds[1:] + ((bounds[-1][1] + 1, None),)):
            if hi < lo or next_lo != hi + 1:
                raise ParameterError(f"bands must be contiguous and non-overlapping, got {bounds}")
        object.__setattr__(self, "bounds", bounds)

    @property
    def num_bands(self):
        return len(self.bounds)

    @property
    def matrix(self):
        """Indicator matrix ``H_b(f)`` of shape (B, N/2+1)."""
        h = np.zeros((self.num_bands, self.num_bins))
        for b, (lo, hi) in enumerate(self.bounds):
            h[b, lo : hi + 1] = 1.0
        return h

    @classmethod
    def from_separators(cls, frame_size, separators):
        """Bands split at the given first-bin indices (B - 1 separators)."""
        last = frame_size // 2
        edges = [0, *separators, last + 1]
        if any(b <= a for a, b in zip(edges, edges[1:])):
            raise ParameterError(f"separators must be increasing within 1..{last}, got {separators}")
        return cls(tuple((a, b - 1) for a, b in zip(edges, edges[1:])), last + 1)


def make_filterbank(frame_size, separator):
    """Two-band filterbank: bins ``0..separator-1`` and ``separator..N/2``."""
    if not 1 <= separator <= frame_size // 2:
        raise ParameterError(f"separator must lie in [1, {frame_size // 2}], got {separator}")
    return Filterbank.from_separators(frame_size, [separator])


@dataclass
class RatioMap:
    """Per-band ratios ``(B, T)`` and their expansion over bins ``(T, F)``."""

    band: np.ndarray
    full: np.ndarray


@dataclass
class TFMask:
    values: np.ndarray
    kind: str = "binary"

    def __post_init__(self):
        if self.kind not in ("binary", "soft"):
            raise ValueError(f"unknown mask kind {self.kind!r}")
        values = np.asarray(self.values, dtype=np.float64)
        if self.kind == "binary" and not np.all((values == 0.0) | (values == 1.0)):
            raise ValueError("binary mask values must be 0 or 1")
        if self.kind == "soft" and not np.all((values >= 0.0) & (values <= 1.0)):
            raise ValueError("soft mask values must lie in [0, 1]")
        self.values = values

    @property
    def shape(self):
        return self.values.shape


def power_ratio(spec, w, fb):
    """
    Beamformed-to-average power ratio per band and frame.

    R_b(t) = sum_f H_b |sum_d W_d Y_d|^2 / (D sum_f H_b sum_d |Y_d|^2)

    Bands with no energy in a frame get R_b(t) = 0.
    """
    y = spec.frames
    weights = w.weights if hasattr(w, "weights") else np.asarray(w)
    num_ch, _, num_bins = y.shape
    if weights.shape != (num_ch, num_bins):
        raise ShapeError(f"steering shape {weights.shape} does not match spectrogram ({num_ch}, {num_bins})")
    if fb.num_bins != num_bins:
        raise ShapeError(f"filterbank covers {fb.num_bins} bins, spectrogram has {num_bins}")

    h = fb.matrix
    beam = np.abs(np.einsum("df,dtf->tf", weights, y)) ** 2
    total = np.sum(np.abs(y) ** 2, axis=0)
    num = beam @ h.T
    den = num_ch * (total @ h.T)
    band = np.zeros_like(num)
    np.divide(num, den, out=band, where=den > 0)
    band = band.T
    return RatioMap(band=band, full=band.T @ h)


def _rank_index(percent, count):
    # nearest-rank: smallest value with at least `percent` % of data at or below it
    return max(math.ceil(percent * count / 100.0) - 1, 0)


def thresholds(ratio, alpha):
    """
    Per-bin thresholds ``(T_X, T_N)`` over all frames.

    ``T_X`` is the nearest-rank ``(100 - alpha)`` percentile. ``T_N`` is the
    mirrored nearest-rank ``alpha`` percentile (the same rule applied to the
    reversed order), so that with distinct values each strict-inequality
    mask keeps exactly ``floor(alpha * T / 100)`` frames.
    """
    if not 0.0 < alpha <= 50.0:
        raise ParameterError(f"alpha must lie in (0, 50], got {alpha}")
    values = ratio.full if isinstance(ratio, RatioMap) else np.asarray(ratio)
    num_frames = values.shape[0]
    if num_frames < 2:
        raise ShapeError(f"need at least 2 frames for percentiles, got {num_frames}")
    ordered = np.sort(values, axis=0)
    upper = _rank_index(100.0 - alpha, num_frames)
    t_x = ordered[upper]
    t_n = ordered[num_frames - 1 - upper]
    return t_x, t_n


def binary_masks(ratio, thr):
    """Target mask ``R > T_X`` and noise mask ``R < T_N`` (ties in neither)."""
    values = ratio.full if isinstance(ratio, RatioMap) else np.asarray(ratio)
    t_x, t_n = thr
    m_x = (values > t_x[None, :]).astype(np.float64)
    m_n = (values < t_n[None, :]).astype(np.float64)
    return TFMask(m_x), TFMask(m_n)


def estimate_masks(spec, w, separator=100, alpha=25.0):
    """Filterbank, ratio, thresholds and masks in one call."""
    fb = make_filterbank(spec.config.frame_size, separator)
    ratio = power_ratio(spec, w, fb)
    return binary_masks(ratio, thresholds(ratio, alpha))
