"""Log-linear scaling fits over model size or training-set size.

Aggregate curves are summarized as score change per log-unit of the
scaled attribute (log10 per decade for aggregates, log2 per doubling for
voxelwise slopes), together with the Pearson correlation of the fit.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


@dataclass
class ScalingSeries:
    """Scores measured at strictly increasing attribute sizes."""

    sizes: np.ndarray  # (n_sizes,)
    scores: np.ndarray  # (n_sizes,) or (n_sizes, n_voxels)

    def __post_init__(self):
        self.sizes = np.asarray(self.sizes, dtype=np.float64).ravel()
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if self.sizes.size != self.scores.shape[0]:
            raise ValidationError("sizes and scores must have matching length")
        if np.any(self.sizes <= 0):
            raise ValidationError("sizes must be positive")
        if np.unique(self.sizes).size != self.sizes.size:
            raise ValidationError("duplicate sizes")
        if self.sizes.size > 1 and not np.all(np.diff(self.sizes) > 0):
            raise ValidationError("sizes must be strictly increasing")


@dataclass
class ScalingFit:
    slope: float  # score change per log-unit
    intercept: float
    pearson_r: float
    log_base: float
    degenerate: bool = False  # constant scores: slope and r reported as 0


def percent_change(scores, baseline_index=0):
    """Scores as percent change relative to the baseline entry."""
    scores = np.asarray(scores, dtype=np.float64)
    baseline = scores[baseline_index]
    if np.any(baseline == 0):
        raise ValidationError("baseline score is zero; percent change undefined")
    return 100.0 * (scores - baseline) / np.abs(baseline)


def fit_loglinear(series, log_base=10.0):
    """Least-squares fit of scores against log(sizes).

    Returns the slope per log-unit, the intercept, and the Pearson r of
    the fit. Constant scores give a flagged zero-slope fit instead of NaN.
    """
    if not isinstance(series, ScalingSeries):
        series = ScalingSeries(*series)
    if series.sizes.size < 2:
        raise ValidationError("need at least 2 points to fit")
    if series.scores.ndim != 1:
        raise ValidationError("fit_loglinear expects an aggregate (1-d) score series")
    x = np.log(series.sizes) / np.log(log_base)
    y = series.scores
    xc = x - x.mean()
    yc = y - y.mean()
    var_x = float(xc @ xc)
    var_y = float(yc @ yc)
    if var_y == 0.0:
        return ScalingFit(0.0, float(y.mean()), 0.0, log_base, degenerate=True)
    slope = float(xc @ yc) / var_x
    intercept = float(y.mean() - slope * x.mean())
    pearson = float(xc @ yc) / np.sqrt(var_x * var_y)
    return ScalingFit(slope, intercept, pearson, log_base)


def voxelwise_slopes(series, log_base=2.0):
    """Per-voxel slope of score change (relative to the smallest size)
    against log(size)."""
    if not isinstance(series, ScalingSeries):
        series = ScalingSeries(*series)
    if series.sizes.size < 2:
        raise ValidationError("need at least 2 sizes")
    scores = series.scores
    if scores.ndim == 1:
        scores = scores[:, None]
    delta = scores - scores[0]
    x = np.log(series.sizes) / np.log(log_base)
    xc = x - x.mean()
    return (xc @ (delta - delta.mean(axis=0))) / float(xc @ xc)


def story_subsample_plan(n_stories_total, sizes, seed=0):
    """Deterministic nested story subsets for data-scaling curves.

    Every smaller subset is contained in every larger one, so adding
    stories never removes information from the training set.
    """
    sizes = [int(s) for s in sizes]
    if any(s < 1 for s in sizes):
        raise ValidationError("subset sizes must be >= 1")
    if max(sizes) > n_stories_total:
        raise ValidationError(
            f"requested {max(sizes)} stories but only {n_stories_total} exist"
        )
    order = np.random.default_rng(seed).permutation(n_stories_total)
    return [sorted(int(i) for i in order[:s]) for s in sizes]
