"""Voxelwise detrending, normalization, and scan-edge trimming.

Detrending subtracts a low-frequency trend estimated by a 2nd-order
Savitzky-Golay smoother with a 120 s window. Near the scan edges the
symmetric window does not fit, so edge samples are fit with asymmetric
truncated windows; edge quality matters little because the trim rules
below remove those samples before any model sees them.
"""

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import convolve1d
from scipy.signal import savgol_coeffs

from .errors import ValidationError


@dataclass(frozen=True)
class TrimPolicy:
    """Volumes removed around scan edges and before evaluation.

    `eval_exclusion_seconds` counts from story onset: when upstream
    trimming has already removed volumes from the start, evaluation only
    removes the remainder, so the total removal from onset is constant.
    """

    train_trim_volumes: int = 10
    test_extra_volumes: int = 40
    eval_exclusion_seconds: float = 100.0

    def __post_init__(self):
        if min(self.train_trim_volumes, self.test_extra_volumes) < 0:
            raise ValidationError("trim volumes must be non-negative")
        if self.eval_exclusion_seconds < 0:
            raise ValidationError("eval_exclusion_seconds must be non-negative")

    def eval_exclusion_volumes(self, tr_seconds):
        ratio = self.eval_exclusion_seconds / tr_seconds
        volumes = round(ratio)
        if abs(ratio - volumes) > 1e-9:
            raise ValidationError(
                f"eval_exclusion_seconds {self.eval_exclusion_seconds} is not a "
                f"whole number of volumes at TR {tr_seconds}"
            )
        return volumes


def _as_columns(series):
    arr = np.asarray(series, dtype=np.float64)
    if arr.ndim == 1:
        return arr[:, None], True
    if arr.ndim != 2:
        raise ValidationError("series must be 1-d or 2-d (time x voxels)")
    return arr, False


def savgol_window_samples(window_seconds, tr_seconds):
    """Window length in samples, rounded up to the next odd count."""
    if tr_seconds <= 0:
        raise ValidationError("tr_seconds must be positive")
    n = int(round(window_seconds / tr_seconds))
    if n % 2 == 0:
        n += 1
    return max(n, 5)


def savgol_detrend(series, tr_seconds, window_seconds=120.0, order=2):
    """Subtract a sliding local-polynomial trend from each voxel.

    Parameters
    ----------
    series : array (n_trs,) or (n_trs, n_voxels)
    tr_seconds : float
        Sampling interval of the rows.
    window_seconds : float
        Width of the smoothing window; converted to an odd sample count.
    order : int
        Polynomial order of the local fit.

    Returns
    -------
    Detrended series with the same shape as the input.
    """
    data, was_1d = _as_columns(series)
    n = data.shape[0]
    win = savgol_window_samples(window_seconds, tr_seconds)
    if win <= order + 1:
        raise ValidationError(f"window of {win} samples too short for order {order}")
    if n <= win:
        raise ValidationError(f"series of {n} samples is shorter than the {win}-sample window")

    kernel = savgol_coeffs(win, order)
    trend = convolve1d(data, kernel, axis=0, mode="constant")

    half = win // 2
    positions = np.arange(n, dtype=np.float64)
    for t in range(half):
        stop = t + half + 1
        trend[t] = _poly_fit_eval(positions[:stop], data[:stop], order, positions[t])
    for t in range(n - half, n):
        start = t - half
        trend[t] = _poly_fit_eval(positions[start:], data[start:], order, positions[t])

    out = data - trend
    return out[:, 0] if was_1d else out


def _poly_fit_eval(x, y, order, x_eval):
    # Centered/scaled Vandermonde keeps the tiny lstsq well conditioned.
    center = x.mean()
    scale = max(x.max() - x.min(), 1.0)
    design = np.vander((x - center) / scale, order + 1, increasing=True)
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    basis = ((x_eval - center) / scale) ** np.arange(order + 1)
    return basis @ coef


def zscore_voxels(series):
    """Scale each voxel to zero mean and unit (population) variance.

    Returns
    -------
    (normalized, zero_variance) where `zero_variance` flags columns that
    were constant; those columns are set to all zeros instead of raising.
    """
    data, was_1d = _as_columns(series)
    mean = data.mean(axis=0)
    sd = data.std(axis=0)
    zero = sd == 0.0
    safe_sd = np.where(zero, 1.0, sd)
    out = (data - mean) / safe_sd
    out[:, zero] = 0.0
    if was_1d:
        return out[:, 0], zero
    return out, zero


def trim_for_training(series, policy, tr_seconds=None):
    """Drop `train_trim_volumes` rows from each end of a training story."""
    arr = np.asarray(series)
    k = policy.train_trim_volumes
    if arr.shape[0] <= 2 * k:
        raise ValidationError(
            f"series of {arr.shape[0]} volumes too short to trim {k} from each end"
        )
    return arr[k : arr.shape[0] - k] if k else arr


def trim_for_evaluation(pred, actual, policy, tr_seconds, volumes_already_trimmed=0):
    """Remove the evaluation-exclusion window from the start of both series.

    `volumes_already_trimmed` says how many volumes upstream preprocessing
    already removed from story onset; only the remainder is dropped here.
    """
    pred = np.asarray(pred)
    actual = np.asarray(actual)
    if pred.shape != actual.shape:
        raise ValidationError(
            f"pred shape {pred.shape} does not match actual shape {actual.shape}"
        )
    total = policy.eval_exclusion_volumes(tr_seconds)
    drop = max(0, total - int(volumes_already_trimmed))
    if drop >= pred.shape[0]:
        raise ValidationError(
            f"series of {pred.shape[0]} volumes shorter than the {drop}-volume exclusion"
        )
    return pred[drop:], actual[drop:]
