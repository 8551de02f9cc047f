"""Temporal alignment of stimulus features to the scan grid.

Irregularly timestamped feature rows (one per word or audio window) are
projected onto TR times with a Lanczos-windowed sinc kernel, then
expanded with FIR delays to absorb the hemodynamic lag. Kernel weights
are not renormalized by default; any global gain is absorbed by the
downstream regression weights.
"""

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .errors import ValidationError

DEFAULT_DELAYS_TRS = (1, 2, 3, 4)
DEFAULT_LOBES = 3


@dataclass
class FeatureTimeSeries:
    """Feature rows at strictly increasing stimulus times."""

    timestamps: np.ndarray  # (n_items,) seconds
    values: np.ndarray  # (n_items, n_features)

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=np.float64).ravel()
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim == 1:
            values = values[:, None]
        self.values = values
        if self.timestamps.size == 0:
            raise ValidationError("feature series is empty")
        if self.timestamps.shape[0] != self.values.shape[0]:
            raise ValidationError(
                f"{self.timestamps.shape[0]} timestamps for {self.values.shape[0]} rows"
            )
        if self.timestamps.size > 1 and not np.all(np.diff(self.timestamps) > 0):
            raise ValidationError("timestamps must be strictly increasing")
        if not np.all(np.isfinite(self.values)):
            raise ValidationError("feature values must be finite")


def lanczos_kernel(dt, cutoff_hz, lobes=DEFAULT_LOBES):
    """Windowed-sinc weight for time offsets `dt` (seconds).

    Unit response at dt=0; support is |dt| < lobes/cutoff_hz.
    """
    x = np.asarray(dt, dtype=np.float64) * cutoff_hz
    out = np.sinc(x) * np.sinc(x / lobes)
    out[np.abs(x) >= lobes] = 0.0
    return out


def lanczos_resample(fts, tr_times, lobes=DEFAULT_LOBES, cutoff_hz=None, normalize=False):
    """Project a feature time series onto scan acquisition times.

    Each output row is the kernel-weighted sum of feature rows within the
    kernel support around that TR; rows with no items in support are zero.
    `cutoff_hz` defaults to the TR Nyquist, 1/(2*TR), inferred from
    `tr_times`. With `normalize=True` each row's weights are divided by
    their sum, which makes the resampler reproduce constants.
    """
    if not isinstance(fts, FeatureTimeSeries):
        raise ValidationError("fts must be a FeatureTimeSeries")
    tr_times = np.asarray(tr_times, dtype=np.float64).ravel()
    if tr_times.size == 0:
        raise ValidationError("tr_times is empty")
    if tr_times.size > 1 and not np.all(np.diff(tr_times) > 0):
        raise ValidationError("tr_times must be strictly increasing")
    if cutoff_hz is None:
        if tr_times.size < 2:
            raise ValidationError("cutoff_hz required when fewer than two TR times")
        cutoff_hz = 1.0 / (2.0 * float(np.median(np.diff(tr_times))))
    if cutoff_hz <= 0:
        raise ValidationError("cutoff_hz must be positive")

    weights = _resample_matrix(fts.timestamps, tr_times, cutoff_hz, lobes, normalize)
    return weights @ fts.values


def _resample_matrix(item_times, tr_times, cutoff_hz, lobes, normalize):
    radius = lobes / cutoff_hz
    lo = np.searchsorted(item_times, tr_times - radius, side="left")
    hi = np.searchsorted(item_times, tr_times + radius, side="right")
    counts = hi - lo
    total = int(counts.sum())
    rows = np.repeat(np.arange(tr_times.size), counts)
    offsets = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
    cols = np.repeat(lo, counts) + offsets
    data = lanczos_kernel(item_times[cols] - tr_times[rows], cutoff_hz, lobes)
    mat = sparse.csr_matrix((data, (rows, cols)), shape=(tr_times.size, item_times.size))
    if normalize:
        sums = np.asarray(mat.sum(axis=1)).ravel()
        scale = np.zeros_like(sums)
        good = np.abs(sums) > 1e-12
        scale[good] = 1.0 / sums[good]
        mat = sparse.diags(scale) @ mat
    return mat


@dataclass
class DelayedDesign:
    """Concatenated time-shifted copies of a base design."""

    matrix: np.ndarray  # (n_trs, n_features * n_delays)
    delays_trs: tuple
    n_base_features: int


def make_delayed(design, delays_trs=DEFAULT_DELAYS_TRS):
    """Stack copies of `design` shifted down by each delay, zero-filled on top.

    Block d satisfies out[t, d*f:(d+1)*f] == design[t - delay_d] for
    t >= delay_d and is zero before the shifted story begins.
    """
    base = np.asarray(design, dtype=np.float64)
    if base.ndim == 1:
        base = base[:, None]
    n_trs, n_feat = base.shape
    delays = tuple(int(d) for d in delays_trs)
    if not delays:
        raise ValidationError("delays_trs must not be empty")
    for d in delays:
        if d < 0:
            raise ValidationError(f"delays must be non-negative, got {d}")
        if d >= n_trs:
            raise ValidationError(f"delay {d} >= series length {n_trs}")
    out = np.zeros((n_trs, n_feat * len(delays)), dtype=np.float64)
    for block, d in enumerate(delays):
        col = block * n_feat
        if d == 0:
            out[:, col : col + n_feat] = base
        else:
            out[d:, col : col + n_feat] = base[:-d]
    return DelayedDesign(matrix=out, delays_trs=delays, n_base_features=n_feat)


def design_matrix(design):
    """Accept either a DelayedDesign or a plain 2-d array."""
    if isinstance(design, DelayedDesign):
        return design.matrix
    arr = np.asarray(design, dtype=np.float64)
    if arr.ndim != 2:
        raise ValidationError("design must be 2-d (time x regressors)")
    return arr
