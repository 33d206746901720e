"""Oracle ideal-ratio-mask GEV baseline (upper bound with clean references)."""

import numpy as np

from .beamform import EnhanceParams, check_array_input, gev_beamform, target_steering
from .errors import ShapeError
from .maskgen import TFMask
from .stft import istft, stft

__all__ = ["ideal_ratio_mask", "oracle_masks", "oracle_gev_enhance"]


def ideal_ratio_mask(target_spec, interference_spec, exponent=0.5):
    """
    IRM(t,f) = (|X|^2 / (|X|^2 + |N|^2)) ** exponent, 0 where both vanish.

    Accepts single-channel spectrograms or plain (T, F) complex arrays.
    """
    x = getattr(target_spec, "frames", target_spec)
    n = getattr(interference_spec, "frames", interference_spec)
    x, n = np.asarray(x), np.asarray(n)
    x = x[0] if x.ndim == 3 and x.shape[0] == 1 else x
    n = n[0] if n.ndim == 3 and n.shape[0] == 1 else n
    if x.shape != n.shape:
        raise ShapeError(f"target {x.shape} and interference {n.shape} spectrograms differ")
    px, pn = np.abs(x) ** 2, np.abs(n) ** 2
    total = px + pn
    ratio = np.zeros_like(px)
    np.divide(px, total, out=ratio, where=total > 0)
    return TFMask(ratio**exponent, kind="soft")


def oracle_masks(target_spec, interference_spec, exponent=0.5, noise_mask="complement"):
    """Target mask IRM and a noise mask of either ``1 - IRM`` or the swapped IRM."""
    irm = ideal_ratio_mask(target_spec, interference_spec, exponent)
    if noise_mask == "complement":
        noise = TFMask(1.0 - irm.values, kind="soft")
    elif noise_mask == "swapped":
        noise = ideal_ratio_mask(interference_spec, target_spec, exponent)
    else:
        raise ValueError(f"unknown noise mask rule {noise_mask!r}")
    return irm, noise


def oracle_gev_enhance(mixture, target_ref, interference_ref, geometry, doa,
                       params=EnhanceParams(), exponent=0.5, noise_mask="complement"):
    """GEV + BAN with SCMs weighted by the oracle IRM.

    The IRM is computed at ``params.reference_channel`` of the (reverberant)
    target and interference images.
    """
    check_array_input(mixture, geometry)
    if target_ref.num_samples != mixture.num_samples or interference_ref.num_samples != mixture.num_samples:
        raise ShapeError("references must be time-aligned with the mixture")
    config = params.stft_config
    ref = params.reference_channel
    spec = stft(mixture, config, pad=True)
    x_spec = stft(target_ref.channel(min(ref, target_ref.num_channels - 1)), config, pad=True)
    n_spec = stft(interference_ref.channel(min(ref, interference_ref.num_channels - 1)), config, pad=True)
    mask_x, mask_n = oracle_masks(x_spec, n_spec, exponent, noise_mask)
    w = target_steering(geometry, doa, mixture.sample_rate, params.frame_size, ref)
    z, _ = gev_beamform(spec, mask_x, mask_n, w, params.loading)
    return istft(z)
