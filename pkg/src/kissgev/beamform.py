"""
Spatial covariance estimation, GEV beamforming with blind analytic
normalization, and the delay-and-sum baseline.

Shapes (D: mics, T: frames, F: bins):
    spectrogram frames: D x T x F
    masks:              T x F
    SCMs:               F x D x D
    weights:            F x D
"""

import logging
from dataclasses import dataclass

import numpy as np

from .array import steering, tdoa
from .errors import NumericError, ShapeError, SolverError
from .maskgen import estimate_masks
from .stft import StftConfig, istft, stft

logger = logging.getLogger(__name__)

__all__ = [
    "SCMSet",
    "BeamformerWeights",
    "EnhanceParams",
    "estimate_scm",
    "load_diagonal",
    "solve_gev",
    "ban_gain",
    "apply_beamformer",
    "delay_and_sum",
    "target_steering",
    "gev_beamform",
    "kissgev_enhance",
    "ds_enhance",
    "check_array_input",
]


@dataclass
class SCMSet:
    phi_xx: np.ndarray
    phi_nn: np.ndarray


@dataclass
class BeamformerWeights:
    """Per-bin unit-norm GEV vectors, BAN gains and diagnostics.

    ``fallback`` flags bins where the target SCM was empty and delay-and-sum
    weights were substituted.
    """

    f_gev: np.ndarray
    g_ban: np.ndarray = None
    eigenvalues: np.ndarray = None
    fallback: np.ndarray = None


@dataclass(frozen=True)
class EnhanceParams:
    separator: int = 100
    alpha: float = 25.0
    frame_size: int = 512
    hop: int = 256
    loading: float = 1e-6
    reference_channel: int = 0

    @property
    def stft_config(self):
        return StftConfig(self.frame_size, self.hop)


def estimate_scm(spec, mask):
    """Masked outer-product sum ``sum_t M(t,f) Y(t,f) Y(t,f)^H``.

    Not normalised by the mask weight; the GEV solution does not depend on
    the SCM scale.
    """
    y = spec.frames
    m = mask.values if hasattr(mask, "values") else np.asarray(mask, dtype=np.float64)
    if m.shape != y.shape[1:]:
        raise ShapeError(f"mask shape {m.shape} does not match spectrogram {y.shape[1:]}")
    phi = np.einsum("tf,dtf,etf->fde", m, y, y.conj(), optimize=True)
    return 0.5 * (phi + np.conj(np.swapaxes(phi, -1, -2)))


def load_diagonal(phi, loading=1e-6, floor=1e-12):
    """``phi + loading * (tr(phi) / D + floor * scale) * I`` per bin.

    ``scale`` is the mean of ``tr(phi) / D`` over all bins (1 if that is
    zero), so near-silent bins stay invertible without breaking invariance
    to the overall signal level.
    """
    num_ch = phi.shape[-1]
    level = np.real(np.trace(phi, axis1=-2, axis2=-1)) / num_ch
    scale = float(np.mean(level)) if np.size(level) else 0.0
    level = level + floor * (scale if scale > 0 else 1.0)
    return phi + (loading * level)[..., None, None] * np.eye(num_ch)


def _cholesky(phi):
    try:
        return np.linalg.cholesky(phi)
    except np.linalg.LinAlgError:
        pass
    for f in range(phi.shape[0]):
        try:
            np.linalg.cholesky(phi[f])
        except np.linalg.LinAlgError:
            raise SolverError(f"noise SCM is not positive definite at bin {f}", freq_bin=f) from None
    raise SolverError("Cholesky factorisation failed")


def solve_gev(scms, w=None, loading=1e-6):
    """
    Principal generalized eigenvector of ``(phi_xx, phi_nn)`` per bin.

    The noise SCM is diagonally loaded, then the Hermitian-definite pencil
    is reduced with its Cholesky factor ``L``:
    ``L^-1 phi_xx L^-H u = lambda u``, ``v = L^-H u``.

    Each vector is scaled to unit norm and rotated so that its inner product
    with the delay-and-sum beamformer ``conj(W)`` is real and non-negative.
    Bins with an all-zero target SCM fall back to ``conj(W) / sqrt(D)``.

    Args:
        scms: SCMSet with F x D x D matrices
        w: SteeringVector (or D x F weights) pointing at the target
    Return:
        BeamformerWeights without BAN gains
    """
    phi_xx, phi_nn = scms.phi_xx, scms.phi_nn
    if phi_xx.shape != phi_nn.shape or phi_xx.shape[-1] != phi_xx.shape[-2]:
        raise ShapeError(f"SCM shapes differ: {phi_xx.shape} vs {phi_nn.shape}")
    if not (np.all(np.isfinite(phi_xx)) and np.all(np.isfinite(phi_nn))):
        bad = np.flatnonzero(~(np.isfinite(phi_xx) & np.isfinite(phi_nn)).all(axis=(-2, -1)))
        raise NumericError(f"non-finite SCM entries at bins {bad.tolist()}")
    num_bins, num_ch, _ = phi_xx.shape

    chol = _cholesky(load_diagonal(phi_nn, loading))
    chol_inv = np.linalg.inv(chol)
    reduced = chol_inv @ phi_xx @ np.conj(np.swapaxes(chol_inv, -1, -2))
    reduced = 0.5 * (reduced + np.conj(np.swapaxes(reduced, -1, -2)))
    eigvals, eigvecs = np.linalg.eigh(reduced)
    vec = np.einsum("fed,fe->fd", np.conj(chol_inv), eigvecs[..., -1])
    vec /= np.linalg.norm(vec, axis=-1, keepdims=True)

    ds = None
    if w is not None:
        weights = w.weights if hasattr(w, "weights") else np.asarray(w)
        if weights.shape != (num_ch, num_bins):
            raise ShapeError(f"steering shape {weights.shape} does not match SCMs ({num_ch}, {num_bins})")
        ds = np.conj(weights.T) / np.sqrt(num_ch)
        ref = np.sum(np.conj(ds) * vec, axis=-1)
    else:
        ref = vec[:, 0]
    mag = np.abs(ref)
    phase = np.ones_like(ref)
    np.divide(np.conj(ref), mag, out=phase, where=mag > 0)
    vec *= phase[:, None]

    fallback = np.real(np.trace(phi_xx, axis1=-2, axis2=-1)) <= 0.0
    if np.any(fallback):
        if ds is None:
            ds = np.full((num_bins, num_ch), 1.0 / np.sqrt(num_ch), dtype=complex)
        vec[fallback] = ds[fallback]
        logger.info("empty target mask at %d bin(s); using delay-and-sum there", int(fallback.sum()))

    return BeamformerWeights(vec, eigenvalues=eigvals[:, -1], fallback=fallback)


def ban_gain(weights, phi_nn):
    """
    Blind analytic normalization gain per bin:

        g = sqrt(F^H phi_nn phi_nn F) / (D^2 F^H phi_nn F)

    Zero where the denominator vanishes.
    """
    f_gev = weights.f_gev if hasattr(weights, "f_gev") else np.asarray(weights)
    num_ch = f_gev.shape[-1]
    proj = np.einsum("fde,fe->fd", phi_nn, f_gev)
    num = np.sqrt(np.sum(np.abs(proj) ** 2, axis=-1))
    den = num_ch**2 * np.real(np.sum(np.conj(f_gev) * proj, axis=-1))
    gain = np.zeros_like(num)
    np.divide(num, den, out=gain, where=den > 0)
    return gain


def apply_beamformer(spec, weights):
    """``Z(t,f) = g(f) F(f)^H Y(t,f)`` as a single-channel spectrogram."""
    f_gev = weights.f_gev
    gain = weights.g_ban if weights.g_ban is not None else np.ones(f_gev.shape[0])
    if f_gev.shape != (spec.num_bins, spec.num_channels):
        raise ShapeError(f"weights {f_gev.shape} do not match spectrogram ({spec.num_bins}, {spec.num_channels})")
    z = np.einsum("fd,dtf->tf", np.conj(f_gev), spec.frames) * gain[None, :]
    return spec.with_frames(z[None])


def delay_and_sum(spec, w):
    """``Z(t,f) = (1/D) sum_d W_d(f) Y_d(t,f)``."""
    weights = w.weights if hasattr(w, "weights") else np.asarray(w)
    if weights.shape != (spec.num_channels, spec.num_bins):
        raise ShapeError(f"steering {weights.shape} does not match spectrogram")
    z = np.einsum("df,dtf->tf", weights, spec.frames) / spec.num_channels
    return spec.with_frames(z[None])


def target_steering(geometry, doa, sample_rate, frame_size, reference_channel=0):
    """Steering vector whose delays are relative to ``reference_channel``.

    Beamformer outputs then line up in time with that microphone's signal,
    which is what the evaluation references are recorded at.
    """
    tau = tdoa(geometry, doa, sample_rate)
    if reference_channel is not None:
        tau = tau - tau[reference_channel]
    return steering(tau, frame_size)


def gev_beamform(spec, mask_x, mask_n, w, loading=1e-6):
    """SCMs from the two masks, then GEV + BAN applied to ``spec``."""
    scms = SCMSet(estimate_scm(spec, mask_x), estimate_scm(spec, mask_n))
    weights = solve_gev(scms, w, loading)
    weights.g_ban = ban_gain(weights, load_diagonal(scms.phi_nn, loading))
    if np.any(weights.fallback):
        weights.g_ban[weights.fallback] = 1.0 / np.sqrt(spec.num_channels)
    return apply_beamformer(spec, weights), weights


def check_array_input(clip, geometry):
    if clip.num_channels < 2:
        raise ShapeError(f"need at least 2 channels, got {clip.num_channels}")
    if clip.num_channels != geometry.num_mics:
        raise ShapeError(f"clip has {clip.num_channels} channels, geometry has {geometry.num_mics} mics")


def kissgev_enhance(clip, geometry, doa, params=EnhanceParams()):
    """Full KISS-GEV pipeline: returns a mono clip of the input length."""
    check_array_input(clip, geometry)
    spec = stft(clip, params.stft_config, pad=True)
    w = target_steering(geometry, doa, clip.sample_rate, params.frame_size, params.reference_channel)
    mask_x, mask_n = estimate_masks(spec, w, params.separator, params.alpha)
    z, _ = gev_beamform(spec, mask_x, mask_n, w, params.loading)
    return istft(z)


def ds_enhance(clip, geometry, doa, params=EnhanceParams()):
    """Delay-and-sum baseline through the same STFT front end."""
    check_array_input(clip, geometry)
    spec = stft(clip, params.stft_config, pad=True)
    w = target_steering(geometry, doa, clip.sample_rate, params.frame_size, params.reference_channel)
    return istft(delay_and_sum(spec, w))
