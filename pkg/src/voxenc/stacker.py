"""Convex stacking of encoding models from multiple feature spaces.

Per voxel, held-out training predictions from each space yield a residual
inner-product matrix R; minimizing a^T R a over the probability simplex
gives convex attribution weights a. The stacked prediction is the
a-weighted sum of per-space predictions, and a validation gate keeps the
stack only where it beats the baseline space with block-bootstrap
confidence.
"""

from dataclasses import dataclass
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .errors import ValidationError
from .ridge import CvConfig, column_correlations, fit_ridge, predict
from .temporal import design_matrix


@dataclass
class StackConfig:
    n_folds: int = 5
    validation_fraction: float = 0.15
    chunk_length_trs: int = 20
    gate_block_trs: int = 20
    gate_bootstraps: int = 1000
    gate_confidence: float = 0.95
    seed: int = 0


@dataclass
class HeldoutPredictions:
    """Out-of-fold training predictions per feature space."""

    predictions: dict  # space name -> (n_trs, n_voxels)
    fold_of_tr: np.ndarray  # (n_trs,) fold index of every training TR


@dataclass
class StackAttribution:
    """Per-voxel convex weights over spaces, with summary and gate."""

    space_names: list
    alpha: np.ndarray  # (n_voxels, n_spaces)
    center_of_mass: np.ndarray  # (n_voxels,)
    gate_stacked: np.ndarray  # (n_voxels,) bool, False -> baseline

    def gate_labels(self):
        return np.where(self.gate_stacked, "stacked", "baseline")


def validate_fold_partition(folds, n_trs):
    """Folds must partition [0, n_trs) exactly; returns fold index per TR."""
    fold_of_tr = np.full(n_trs, -1, dtype=np.int64)
    for k, idx in enumerate(folds):
        idx = np.asarray(idx, dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= n_trs):
            raise ValidationError(f"fold {k} indexes outside [0, {n_trs})")
        if np.any(fold_of_tr[idx] >= 0):
            raise ValidationError(f"fold {k} overlaps an earlier fold")
        fold_of_tr[idx] = k
    missing = int((fold_of_tr < 0).sum())
    if missing:
        raise ValidationError(f"folds are not a partition: {missing} TRs unassigned")
    return fold_of_tr


def make_folds(n_trs, n_folds=5, boundaries=None, chunk_length_trs=20):
    """Contiguous folds aligned to story boundaries when there are enough
    stories, otherwise to fixed-length chunks.

    `boundaries` are the start offsets of each story segment within the
    training timeline (0 must be included when given).
    """
    if n_folds < 2:
        raise ValidationError("need at least 2 folds")
    if boundaries is not None and len(boundaries) >= n_folds:
        edges = sorted(set(int(b) for b in boundaries)) + [n_trs]
        units = [(edges[i], edges[i + 1]) for i in range(len(edges) - 1)]
    else:
        starts = list(range(0, n_trs, chunk_length_trs))
        units = [(s, min(s + chunk_length_trs, n_trs)) for s in starts]
    if len(units) < n_folds:
        raise ValidationError(f"only {len(units)} chunks for {n_folds} folds")
    folds = []
    for group in np.array_split(np.arange(len(units)), n_folds):
        rows = np.concatenate([np.arange(units[u][0], units[u][1]) for u in group])
        folds.append(rows)
    return folds


def heldout_predictions(spaces, Y, folds, cv=None):
    """Concatenated out-of-fold predictions for every feature space.

    Each fold's model is trained on the remaining folds, so every training
    TR is predicted exactly once per space.
    """
    cv = cv or CvConfig()
    Y = np.asarray(Y, dtype=np.float64)
    mats = {name: design_matrix(X) for name, X in spaces.items()}
    for name, X in mats.items():
        if X.shape[0] != Y.shape[0]:
            raise ValidationError(
                f"space {name!r} has {X.shape[0]} rows but responses have {Y.shape[0]}"
            )
    fold_of_tr = validate_fold_partition(folds, Y.shape[0])
    preds = {name: np.empty_like(Y) for name in mats}
    for k, test_rows in enumerate(folds):
        test_rows = np.asarray(test_rows, dtype=np.int64)
        train_rows = np.flatnonzero(fold_of_tr != k)
        for name, X in mats.items():
            model = fit_ridge(
                X[train_rows],
                Y[train_rows],
                CvConfig(
                    n_bootstraps=cv.n_bootstraps,
                    chunk_length_trs=cv.chunk_length_trs,
                    holdout_fraction=cv.holdout_fraction,
                    alpha_grid=cv.alpha_grid,
                    seed=cv.seed + k,
                ),
                feature_space_id=name,
            )
            preds[name][test_rows] = predict(model, X[test_rows])
    return HeldoutPredictions(predictions=preds, fold_of_tr=fold_of_tr)


def residual_covariance(held, Y):
    """Uncentered residual inner products per voxel, (n_voxels, k, k).

    R[v, p, q] = sum_t (y - f_p)(y - f_q); no mean removal and no 1/n, so
    the matrix scale carries the residual power directly (the simplex
    minimizer is scale invariant).
    """
    preds = held.predictions if isinstance(held, HeldoutPredictions) else held
    names = list(preds)
    Y = np.asarray(Y, dtype=np.float64)
    resid = np.stack([Y - np.asarray(preds[name], dtype=np.float64) for name in names])
    if not np.all(np.isfinite(resid)):
        raise ValidationError("residuals contain non-finite values")
    return np.einsum("ptv,qtv->vpq", resid, resid, optimize=True)


def solve_simplex_qp(R, kkt_tol=1e-9, max_iter=None):
    """Minimize a^T R a over the probability simplex (a >= 0, sum a = 1).

    Active-set iteration: solve the equality-constrained problem on the
    current support, step to the boundary when a coordinate would go
    negative, and expand the support while any inactive coordinate has a
    gradient below the active set's common value.
    """
    R = np.asarray(R, dtype=np.float64)
    if R.ndim != 2 or R.shape[0] != R.shape[1]:
        raise ValidationError("R must be square")
    k = R.shape[0]
    if k == 0:
        raise ValidationError("R is empty")
    scale = max(float(np.abs(R).max()), 1e-30)
    if float(np.abs(R - R.T).max()) > 1e-8 * scale:
        raise ValidationError("R is not symmetric")
    if k == 1:
        return np.ones(1)
    S = (R + R.T) / 2.0

    alpha = np.zeros(k)
    start = int(np.argmin(np.diag(S)))
    alpha[start] = 1.0
    active = np.zeros(k, dtype=bool)
    active[start] = True

    limit = max_iter or (20 * k * k + 50)
    for _ in range(limit):
        trial = _face_minimizer(S, active)
        if trial[active].min() >= -1e-12:
            alpha = np.clip(trial, 0.0, None)
            alpha /= alpha.sum()
            grad = S @ alpha
            lam = float(grad[active].mean())
            inactive = ~active
            if not inactive.any():
                return alpha
            gap = lam - grad[inactive]
            if gap.max() <= kkt_tol * max(scale, np.abs(lam)):
                return alpha
            enter = np.flatnonzero(inactive)[int(np.argmax(gap))]
            active[enter] = True
        else:
            direction = trial - alpha
            blocking = active & (direction < 0)
            steps = -alpha[blocking] / direction[blocking]
            theta = float(steps.min())
            theta = min(theta, 1.0)
            alpha = alpha + theta * direction
            drop = np.flatnonzero(blocking)[int(np.argmin(steps))]
            active[drop] = False
            alpha[~active] = 0.0
            alpha = np.clip(alpha, 0.0, None)
            total = alpha.sum()
            if total > 0:
                alpha /= total
    return _projected_gradient(S, alpha)


def _face_minimizer(S, active):
    """Solve min a^T S a with sum(a)=1 restricted to the active support."""
    idx = np.flatnonzero(active)
    m = idx.size
    kkt = np.zeros((m + 1, m + 1))
    kkt[:m, :m] = 2.0 * S[np.ix_(idx, idx)]
    kkt[:m, m] = 1.0
    kkt[m, :m] = 1.0
    rhs = np.zeros(m + 1)
    rhs[m] = 1.0
    try:
        sol = np.linalg.solve(kkt, rhs)
        if not np.all(np.isfinite(sol)):
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
    out = np.zeros(S.shape[0])
    out[idx] = sol[:m]
    return out


def _projected_gradient(S, alpha, iters=20000, tol=1e-14):
    """Accelerated projected-gradient fallback for pathological supports."""
    k = S.shape[0]
    lam_max = float(np.linalg.eigvalsh(S)[-1])
    step = 1.0 / max(2.0 * lam_max, 1e-30)
    x = project_to_simplex(alpha)
    y = x.copy()
    t = 1.0
    last = float(x @ S @ x)
    for _ in range(iters):
        grad = 2.0 * (S @ y)
        x_new = project_to_simplex(y - step * grad)
        t_new = (1.0 + np.sqrt(1.0 + 4.0 * t * t)) / 2.0
        y = x_new + ((t - 1.0) / t_new) * (x_new - x)
        x, t = x_new, t_new
        obj = float(x @ S @ x)
        if abs(last - obj) <= tol * max(1.0, abs(obj)):
            break
        last = obj
    return x


def project_to_simplex(v):
    """Euclidean projection onto the probability simplex."""
    v = np.asarray(v, dtype=np.float64)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    rho = np.flatnonzero(u - css / np.arange(1, v.size + 1) > 0)[-1]
    theta = css[rho] / (rho + 1.0)
    return np.clip(v - theta, 0.0, None)


def solve_simplex_qp_batch(Rs, workers=1, kkt_tol=1e-9):
    """Solve one simplex QP per voxel; (n_voxels, k) attributions."""
    Rs = np.asarray(Rs, dtype=np.float64)
    n = Rs.shape[0]
    out = np.empty((n, Rs.shape[1]), dtype=np.float64)

    def run_block(lo, hi):
        for v in range(lo, hi):
            out[v] = solve_simplex_qp(Rs[v], kkt_tol=kkt_tol)

    if workers <= 1 or n < 64:
        run_block(0, n)
        return out
    block = 256  # fixed block size keeps results independent of worker count
    edges = list(range(0, n, block)) + [n]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        jobs = [pool.submit(run_block, edges[i], edges[i + 1]) for i in range(len(edges) - 1)]
        for job in jobs:
            job.result()
    return out


def center_of_mass(alpha, layer_indices=None):
    """Expected layer index under the attribution weights.

    `alpha` must lie on the simplex; layers default to 1..m in order.
    Appending zero-weight layers never changes the value.
    """
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.ndim != 1 or alpha.size == 0:
        raise ValidationError("alpha must be a non-empty vector")
    if alpha.min() < -1e-10 or abs(alpha.sum() - 1.0) > 1e-8:
        raise ValidationError("alpha is not a valid simplex vector")
    if layer_indices is None:
        layer_indices = np.arange(1, alpha.size + 1, dtype=np.float64)
    else:
        layer_indices = np.asarray(layer_indices, dtype=np.float64)
        if layer_indices.shape != alpha.shape:
            raise ValidationError("layer_indices must match alpha")
    return float(layer_indices @ alpha)


def audio_center_of_mass(alpha_matrix, audio_columns, renormalize=True):
    """Center of mass over the audio-layer columns of a stacked attribution.

    With `renormalize` the audio mass is rescaled to sum to one first;
    voxels with no audio mass get NaN.
    """
    alpha_matrix = np.asarray(alpha_matrix, dtype=np.float64)
    audio = alpha_matrix[:, list(audio_columns)]
    layers = np.arange(1, audio.shape[1] + 1, dtype=np.float64)
    mass = audio.sum(axis=1)
    raw = audio @ layers
    if not renormalize:
        return raw
    out = np.full(alpha_matrix.shape[0], np.nan)
    ok = mass > 1e-12
    out[ok] = raw[ok] / mass[ok]
    return out


def stacked_predict(preds_by_space, alpha_matrix):
    """Voxelwise convex combination of per-space predictions.

    `preds_by_space` is a dict or sequence of (n_trs, n_voxels) arrays in
    the same order as the attribution columns.
    """
    if isinstance(preds_by_space, dict):
        preds = list(preds_by_space.values())
    else:
        preds = list(preds_by_space)
    stack = np.stack([np.asarray(p, dtype=np.float64) for p in preds])
    alpha_matrix = np.asarray(alpha_matrix, dtype=np.float64)
    if alpha_matrix.shape != (stack.shape[2], stack.shape[0]):
        raise ValidationError(
            f"alpha shape {alpha_matrix.shape} does not match "
            f"{stack.shape[0]} spaces x {stack.shape[2]} voxels"
        )
    return np.einsum("ktv,vk->tv", stack, alpha_matrix, optimize=True)


def ensure_disjoint_validation(train_rows, validation_rows):
    """Reject validation segments that overlap the rows used for fitting."""
    overlap = np.intersect1d(np.asarray(train_rows), np.asarray(validation_rows))
    if overlap.size:
        raise ValidationError(
            f"validation overlaps training on {overlap.size} TRs (first: {overlap[0]})"
        )


def gate_stacked(
    stacked_pred,
    baseline_pred,
    y_validation,
    block_trs=20,
    n_bootstraps=1000,
    confidence=0.95,
    seed=0,
):
    """Per-voxel choice between the stacked and baseline predictions.

    The stack wins only where its validation correlation improvement over
    the baseline is positive with block-bootstrap confidence; ties and
    identical predictions fall back to the baseline.
    """
    stacked_pred = np.asarray(stacked_pred, dtype=np.float64)
    baseline_pred = np.asarray(baseline_pred, dtype=np.float64)
    y_validation = np.asarray(y_validation, dtype=np.float64)
    if stacked_pred.shape != y_validation.shape or baseline_pred.shape != y_validation.shape:
        raise ValidationError("gate inputs must share one (time x voxels) shape")
    n_trs = y_validation.shape[0]
    starts = np.arange(0, n_trs, block_trs)
    blocks = [np.arange(s, min(s + block_trs, n_trs)) for s in starts]
    rng = np.random.default_rng(seed)
    deltas = np.empty((n_bootstraps, y_validation.shape[1]), dtype=np.float64)
    for b in range(n_bootstraps):
        chosen = rng.integers(0, len(blocks), size=len(blocks))
        rows = np.concatenate([blocks[c] for c in chosen])
        r_stacked, _ = column_correlations(stacked_pred[rows], y_validation[rows])
        r_base, _ = column_correlations(baseline_pred[rows], y_validation[rows])
        deltas[b] = r_stacked - r_base
    lower = np.quantile(deltas, (1.0 - confidence) / 2.0, axis=0)
    return lower > 0.0
