"""Per-voxel ridge encoding models.

All solves go through one spectral decomposition of the design per
training set: the Gram matrix on the smaller side (n x n or p x p) is
eigendecomposed once, after which every regularization value on the grid
costs only a diagonal rescale and two matrix products. This stays
well-defined in the wide regime (more regressors than timepoints), where
rank-deficient directions are clipped at machine-epsilon scale.

Regularization is chosen per voxel by chunked bootstrap cross-validation:
contiguous chunks of TRs are held out so temporal autocorrelation cannot
leak across the split.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .temporal import design_matrix

DEFAULT_ALPHA_GRID = tuple(np.logspace(1.0, 6.0, 10))


@dataclass
class CvConfig:
    """Chunked bootstrap cross-validation settings for the alpha sweep."""

    n_bootstraps: int = 15
    chunk_length_trs: int = 20
    holdout_fraction: float = 0.2
    alpha_grid: tuple = DEFAULT_ALPHA_GRID
    seed: int = 0

    def alphas(self):
        grid = np.asarray(self.alpha_grid, dtype=np.float64)
        if grid.size == 0:
            raise ValidationError("alpha_grid must not be empty")
        if np.any(grid <= 0):
            raise ValidationError("alpha_grid values must be positive")
        return np.sort(grid)


@dataclass
class EncodingModel:
    """Linear weights per voxel plus the regularization that produced them."""

    weights: np.ndarray  # (n_regressors, n_voxels)
    alpha_per_voxel: np.ndarray  # (n_voxels,)
    feature_space_id: str = ""
    layer_id: int = 0
    training_meta: dict = field(default_factory=dict)


@dataclass
class VoxelScore:
    """Per-voxel prediction score: Pearson r and signed r^2 (|r|*r)."""

    r: np.ndarray
    r_signed_sq: np.ndarray
    constant: np.ndarray  # True where pred or actual had zero variance


class SharedSpectrum:
    """Eigendecomposition of a design's Gram matrix, shared across alphas.

    Weights for any alpha come out as B diag(1/(lam + alpha)) C^T y with
    B = V, C = X V (tall designs, Gram = X^T X) or B = X^T U, C = U (wide
    designs, Gram = X X^T); both agree exactly with the SVD ridge path.
    """

    def __init__(self, X):
        X = np.ascontiguousarray(X, dtype=np.float64)
        n, p = X.shape
        if n >= p:
            lam, basis = np.linalg.eigh(X.T @ X)
            B, C = basis, X @ basis
        else:
            lam, basis = np.linalg.eigh(X @ X.T)
            B, C = X.T @ basis, basis
        # eigh resolves eigenvalues of the Gram to ~eps * lam_max, so the
        # rank cutoff scales linearly with the top eigenvalue.
        clip = np.finfo(np.float64).eps * max(float(lam[-1]), 0.0) * max(n, p)
        keep = lam > clip
        self.eigenvalues = lam[keep]
        self._left = B[:, keep]
        self._right = C[:, keep]
        self.n_rows = n
        self.n_regressors = p

    def project_targets(self, Y):
        """Targets expressed in the spectral basis, (n_components, n_voxels)."""
        return self._right.T @ Y

    def weights(self, projected, alpha):
        """Ridge weights for one alpha from projected targets."""
        return self._left @ (projected / (self.eigenvalues + alpha)[:, None])

    def prediction_basis(self, X_new):
        """Precompute X_new in the spectral basis for fast alpha sweeps."""
        return X_new @ self._left

    def predict_from_basis(self, basis, projected, alpha):
        scaled = basis / (self.eigenvalues + alpha)[None, :]
        return scaled @ projected


def ridge_solution(X, Y, alpha):
    """Ridge weights through the shared spectral decomposition.

    `alpha` may be a scalar or one value per voxel. Equivalent to solving
    (X^T X + alpha I) w = X^T y for each voxel.
    """
    X = design_matrix(X)
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    if X.shape[0] != Y.shape[0]:
        raise ValidationError(f"X has {X.shape[0]} rows but Y has {Y.shape[0]}")
    spectrum = SharedSpectrum(X)
    projected = spectrum.project_targets(Y)
    alphas = np.broadcast_to(np.asarray(alpha, dtype=np.float64), (Y.shape[1],))
    out = np.empty((X.shape[1], Y.shape[1]), dtype=np.float64)
    for a in np.unique(alphas):
        cols = alphas == a
        out[:, cols] = spectrum.weights(projected[:, cols], a)
    return out


def _chunk_slices(n_rows, chunk_length):
    starts = np.arange(0, n_rows, chunk_length)
    return [(int(s), int(min(s + chunk_length, n_rows))) for s in starts]


def column_correlations(pred, actual):
    """Pearson r per column; zero (and flagged) where either is constant."""
    pred = np.asarray(pred, dtype=np.float64)
    actual = np.asarray(actual, dtype=np.float64)
    pc = pred - pred.mean(axis=0)
    ac = actual - actual.mean(axis=0)
    psd = np.sqrt((pc * pc).mean(axis=0))
    asd = np.sqrt((ac * ac).mean(axis=0))
    flat = (psd == 0) | (asd == 0)
    denom = np.where(flat, 1.0, psd * asd)
    r = (pc * ac).mean(axis=0) / denom
    r[flat] = 0.0
    return np.clip(r, -1.0, 1.0), flat


def fit_ridge(X, Y, cv=None, feature_space_id="", layer_id=0):
    """Fit per-voxel ridge models, selecting alpha by held-out correlation.

    Parameters
    ----------
    X : DelayedDesign or array (n_trs, n_regressors)
    Y : array (n_trs, n_voxels)
    cv : CvConfig
        Bootstrap/chunk/alpha-grid settings; defaults used when omitted.

    Returns
    -------
    EncodingModel with weights fit on all rows at each voxel's best alpha.
    Ties on the mean held-out correlation resolve to the smallest alpha.
    """
    cv = cv or CvConfig()
    X = design_matrix(X)
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    if X.shape[0] != Y.shape[0]:
        raise ValidationError(f"X has {X.shape[0]} rows but Y has {Y.shape[0]}")
    if not np.all(np.isfinite(X)):
        raise ValidationError("design contains non-finite values")
    if not np.all(np.isfinite(Y)):
        raise ValidationError("responses contain non-finite values")
    if not np.any(X):
        raise ValidationError("degenerate all-zero design")

    alphas = cv.alphas()
    n_trs, n_voxels = Y.shape[0], Y.shape[1]
    chunks = _chunk_slices(n_trs, cv.chunk_length_trs)
    n_hold = max(1, int(round(cv.holdout_fraction * len(chunks))))
    if n_hold >= len(chunks):
        raise ValidationError(
            f"{len(chunks)} chunks of {cv.chunk_length_trs} TRs leave no training data"
        )

    rng = np.random.default_rng(cv.seed)
    corr_sum = np.zeros((alphas.size, n_voxels))
    for _ in range(cv.n_bootstraps):
        held = rng.choice(len(chunks), size=n_hold, replace=False)
        mask = np.zeros(n_trs, dtype=bool)
        for c in held:
            lo, hi = chunks[c]
            mask[lo:hi] = True
        spectrum = SharedSpectrum(X[~mask])
        projected = spectrum.project_targets(Y[~mask])
        basis = spectrum.prediction_basis(X[mask])
        y_test = Y[mask]
        for ai, a in enumerate(alphas):
            pred = spectrum.predict_from_basis(basis, projected, a)
            r, _ = column_correlations(pred, y_test)
            corr_sum[ai] += r

    mean_corr = corr_sum / cv.n_bootstraps
    best = np.argmax(mean_corr, axis=0)  # first max -> smallest alpha on ties

    spectrum = SharedSpectrum(X)
    projected = spectrum.project_targets(Y)
    weights = np.empty((X.shape[1], n_voxels), dtype=np.float64)
    for ai in np.unique(best):
        cols = best == ai
        weights[:, cols] = spectrum.weights(projected[:, cols], alphas[ai])

    meta = {
        "n_timepoints": int(n_trs),
        "n_regressors": int(X.shape[1]),
        "n_bootstraps": int(cv.n_bootstraps),
        "chunk_length_trs": int(cv.chunk_length_trs),
        "holdout_fraction": float(cv.holdout_fraction),
        "alpha_grid": [float(a) for a in alphas],
        "seed": int(cv.seed),
        "mean_cv_r": float(np.take_along_axis(mean_corr, best[None, :], axis=0).mean()),
    }
    return EncodingModel(
        weights=weights,
        alpha_per_voxel=alphas[best],
        feature_space_id=feature_space_id,
        layer_id=layer_id,
        training_meta=meta,
    )


def predict(model, X):
    """Model predictions X @ weights, (n_trs, n_voxels)."""
    X = design_matrix(X)
    if X.shape[1] != model.weights.shape[0]:
        raise ValidationError(
            f"design width {X.shape[1]} does not match weight rows {model.weights.shape[0]}"
        )
    return X @ model.weights


def score(pred, actual):
    """Per-voxel prediction score against the measured response.

    Constant columns on either side score r = 0 and are flagged rather
    than propagating NaN.
    """
    pred = np.asarray(pred, dtype=np.float64)
    actual = np.asarray(actual, dtype=np.float64)
    if pred.ndim == 1:
        pred = pred[:, None]
    if actual.ndim == 1:
        actual = actual[:, None]
    if pred.shape != actual.shape:
        raise ValidationError(f"pred shape {pred.shape} != actual shape {actual.shape}")
    if pred.shape[0] < 3:
        raise ValidationError("need at least 3 timepoints to score")
    r, flat = column_correlations(pred, actual)
    return VoxelScore(r=r, r_signed_sq=np.abs(r) * r, constant=flat)


def mean_cortex_score(scores, mask=None):
    """Mean correlation over the (masked) voxel set."""
    r = scores.r if isinstance(scores, VoxelScore) else np.asarray(scores, dtype=np.float64)
    if mask is not None:
        mask = np.asarray(mask)
        r = r[mask]
    if r.size == 0:
        raise ValidationError("voxel mask is empty")
    return float(r.mean())


def best_layer(per_layer_scores):
    """Layer id with the highest mean score; ties go to the lower id."""
    if not per_layer_scores:
        raise ValidationError("no layer scores given")
    top = max(per_layer_scores.values())
    return min(layer for layer, value in per_layer_scores.items() if value == top)
