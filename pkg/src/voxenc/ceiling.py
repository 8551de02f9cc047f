"""Noise ceilings from repeated test presentations.

Repeat-trial variance splits into signal power (reproducible across
presentations, explainable in principle) and noise power (trial-specific,
unexplainable). The ceiling is the correlation an ideal predictor of the
signal would reach against N-trial averaged data; raw scores divided by a
floored ceiling give normalized scores that stay finite on dead voxels.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

CLAMP_FLOOR = 0.25
DISPLAY_THRESHOLD = 0.35


@dataclass
class CeilingEstimate:
    signal_power: np.ndarray  # (n_voxels,)
    noise_power: np.ndarray
    cc_max: np.ndarray  # 0 where signal power <= 0 (see zero_signal)
    cc_max_clamped: np.ndarray
    n_repeats: int
    zero_signal: np.ndarray  # True where the signal-power estimate was <= 0


def signal_noise_power(repeats):
    """Split repeat-trial variance into signal and noise power per voxel.

    Parameters
    ----------
    repeats : array (n_repeats, n_trs, n_voxels)
        Time-aligned responses to identical presentations.

    Returns
    -------
    (signal_power, noise_power); their sum equals the mean single-repeat
    variance by construction. Signal power may come out negative for
    pure-noise voxels and is reported as-is.
    """
    repeats = np.asarray(repeats, dtype=np.float64)
    if repeats.ndim == 2:
        repeats = repeats[:, :, None]
    if repeats.ndim != 3:
        raise ValidationError("repeats must be (n_repeats, n_trs, n_voxels)")
    n = repeats.shape[0]
    if n < 2:
        raise ValidationError(f"need at least 2 repeats, got {n}")
    var_each = repeats.var(axis=1)  # population variance, (n_repeats, n_voxels)
    var_of_sum = repeats.sum(axis=0).var(axis=0)
    signal = (var_of_sum - var_each.sum(axis=0)) / (n * n - n)
    noise = var_each.mean(axis=0) - signal
    return signal, noise


def cc_max(signal_power, noise_power, n_repeats, clamp_floor=CLAMP_FLOOR):
    """Ceiling correlation of an ideal model against n-repeat averaged data.

    Voxels with non-positive signal power get a ceiling of 0 and a flag;
    the clamped variant never drops below `clamp_floor`, which regularizes
    normalized scores on noisy voxels. Negative noise-power estimates
    (possible within estimator noise) are treated as 0.
    """
    if n_repeats < 1:
        raise ValidationError("n_repeats must be >= 1")
    sp = np.asarray(signal_power, dtype=np.float64)
    npow = np.asarray(noise_power, dtype=np.float64)
    zero = sp <= 0
    ratio = np.clip(npow, 0.0, None) / (n_repeats * np.where(zero, 1.0, sp))
    ceiling = 1.0 / np.sqrt(1.0 + ratio)
    ceiling = np.where(zero, 0.0, ceiling)
    return ceiling, np.maximum(ceiling, clamp_floor), zero


def estimate_ceiling(repeats, clamp_floor=CLAMP_FLOOR):
    """Full per-voxel ceiling estimate from stacked repeats."""
    repeats = np.asarray(repeats, dtype=np.float64)
    signal, noise = signal_noise_power(repeats)
    ceiling, clamped, zero = cc_max(signal, noise, repeats.shape[0], clamp_floor)
    return CeilingEstimate(
        signal_power=signal,
        noise_power=noise,
        cc_max=ceiling,
        cc_max_clamped=clamped,
        n_repeats=repeats.shape[0],
        zero_signal=zero,
    )


def cc_norm(cc_abs, ceiling):
    """Raw correlations divided by the clamped ceiling; may exceed 1."""
    return np.asarray(cc_abs, dtype=np.float64) / ceiling.cc_max_clamped


def display_mask(ceiling, threshold=DISPLAY_THRESHOLD):
    """True where the unclamped ceiling strictly exceeds the threshold."""
    return ceiling.cc_max > threshold
