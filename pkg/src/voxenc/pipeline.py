"""Manifest-driven assembly of designs and end-to-end passes.

Everything here composes the math modules against on-disk datasets:
build per-story delayed designs, concatenate trimmed training stories,
fit and score encoding models, run the stacking pass, and write
preprocessed copies of a dataset.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .manifest import load_manifest
from .preprocess import TrimPolicy, savgol_detrend, trim_for_evaluation, trim_for_training, zscore_voxels
from .ridge import CvConfig, column_correlations, fit_ridge, predict, score
from .stacker import (
    StackAttribution,
    StackConfig,
    audio_center_of_mass,
    ensure_disjoint_validation,
    gate_stacked,
    heldout_predictions,
    make_folds,
    residual_covariance,
    solve_simplex_qp_batch,
    stacked_predict,
)
from .temporal import DEFAULT_DELAYS_TRS, FeatureTimeSeries, lanczos_resample, make_delayed
from .tensorfile import read_tensor, write_tensor


def story_tr_times(story, tr_seconds):
    return np.arange(story.n_trs) * tr_seconds


def build_story_design(manifest, space, story_name, delays_trs=DEFAULT_DELAYS_TRS, lobes=3):
    """Resampled-and-delayed design for one feature space and story."""
    story = manifest.story(story_name)
    times, values = manifest.load_features(space, story_name)
    fts = FeatureTimeSeries(timestamps=times, values=values)
    resampled = lanczos_resample(fts, story_tr_times(story, manifest.tr_seconds), lobes=lobes)
    return make_delayed(resampled, delays_trs).matrix


def assemble_training(
    manifest,
    space,
    delays_trs=DEFAULT_DELAYS_TRS,
    policy=None,
    stories=None,
    lobes=3,
):
    """Concatenated, edge-trimmed training design and responses.

    Returns (X, Y, boundaries) where boundaries holds the start row of
    each story segment within the concatenated timeline.
    """
    policy = policy or TrimPolicy()
    names = stories if stories is not None else [s.name for s in manifest.train_stories()]
    if not names:
        raise ValidationError("no training stories selected")
    xs, ys, boundaries = [], [], []
    offset = 0
    for name in names:
        design = build_story_design(manifest, space, name, delays_trs, lobes)
        y = manifest.load_response(name)
        design = trim_for_training(design, policy)
        y = trim_for_training(y, policy)
        boundaries.append(offset)
        offset += design.shape[0]
        xs.append(design)
        ys.append(y)
    return np.vstack(xs), np.vstack(ys), boundaries


def fit_space(
    manifest,
    space,
    cv=None,
    delays_trs=DEFAULT_DELAYS_TRS,
    policy=None,
    stories=None,
    layer_id=0,
    lobes=3,
):
    """Fit one feature space's encoding model from a manifest."""
    X, Y, _ = assemble_training(manifest, space, delays_trs, policy, stories, lobes)
    model = fit_ridge(X, Y, cv, feature_space_id=space, layer_id=layer_id)
    model.training_meta["stories"] = list(
        stories if stories is not None else [s.name for s in manifest.train_stories()]
    )
    model.training_meta["delays_trs"] = list(delays_trs)
    return model


def score_on_tests(
    manifest,
    model,
    space,
    delays_trs=DEFAULT_DELAYS_TRS,
    policy=None,
    stories=None,
    lobes=3,
):
    """Pooled test-story score for a fitted model.

    Predictions and measured responses drop the evaluation-exclusion
    window from each story onset before scoring.
    """
    policy = policy or TrimPolicy()
    names = stories if stories is not None else [s.name for s in manifest.test_stories()]
    if not names:
        raise ValidationError("no test stories available")
    preds, actuals = [], []
    for name in names:
        design = build_story_design(manifest, space, name, delays_trs, lobes)
        pred = predict(model, design)
        actual = manifest.load_response(name)
        pred, actual = trim_for_evaluation(pred, actual, policy, manifest.tr_seconds)
        preds.append(pred)
        actuals.append(actual)
    return score(np.vstack(preds), np.vstack(actuals))


@dataclass
class StackResult:
    spaces: list
    baseline: str
    attribution: StackAttribution
    fit_rows: np.ndarray
    validation_rows: np.ndarray
    test_predictions: dict  # story -> {"final", "stacked", "baseline", <space>...}
    validation_mean_r: dict = field(default_factory=dict)


def run_stack(
    manifest,
    spaces,
    baseline,
    cv=None,
    stack_cfg=None,
    delays_trs=DEFAULT_DELAYS_TRS,
    policy=None,
    workers=1,
    lobes=3,
):
    """Full stacking pass: held-out predictions, per-voxel simplex weights,
    validation gate, and gated test predictions.

    The last `validation_fraction` of the training timeline (block-aligned)
    is held aside from every fit and from the attribution estimate; the
    gate compares stacked and baseline predictions there.
    """
    cfg = stack_cfg or StackConfig()
    cv = cv or CvConfig()
    spaces = list(spaces)
    if baseline not in spaces:
        raise ValidationError(f"baseline {baseline!r} must be one of the stacked spaces")

    designs = {}
    Y = None
    boundaries = None
    for name in spaces:
        X, y, bounds = assemble_training(manifest, name, delays_trs, policy, lobes=lobes)
        designs[name] = X
        if Y is None:
            Y, boundaries = y, bounds
    n_trs = Y.shape[0]

    block = cfg.gate_block_trs
    n_val_blocks = max(1, int(round(cfg.validation_fraction * n_trs / block)))
    val_start = n_trs - n_val_blocks * block
    if val_start <= 0:
        raise ValidationError("validation fraction leaves no training data")
    fit_rows = np.arange(val_start)
    val_rows = np.arange(val_start, n_trs)
    ensure_disjoint_validation(fit_rows, val_rows)

    fit_boundaries = [b for b in boundaries if b < val_start]
    folds = make_folds(
        val_start,
        cfg.n_folds,
        boundaries=fit_boundaries if len(fit_boundaries) >= cfg.n_folds else None,
        chunk_length_trs=cfg.chunk_length_trs,
    )
    held = heldout_predictions(
        {name: designs[name][fit_rows] for name in spaces}, Y[fit_rows], folds, cv
    )
    R = residual_covariance(held, Y[fit_rows])
    alpha = solve_simplex_qp_batch(R, workers=workers)

    models = {
        name: fit_ridge(designs[name][fit_rows], Y[fit_rows], cv, feature_space_id=name)
        for name in spaces
    }

    val_preds = {name: predict(models[name], designs[name][val_rows]) for name in spaces}
    stacked_val = stacked_predict([val_preds[name] for name in spaces], alpha)
    gate = gate_stacked(
        stacked_val,
        val_preds[baseline],
        Y[val_rows],
        block_trs=cfg.gate_block_trs,
        n_bootstraps=cfg.gate_bootstraps,
        confidence=cfg.gate_confidence,
        seed=cfg.seed,
    )

    audio_columns = [i for i, name in enumerate(spaces) if name != baseline]
    com = (
        audio_center_of_mass(alpha, audio_columns)
        if audio_columns
        else np.full(alpha.shape[0], np.nan)
    )
    attribution = StackAttribution(
        space_names=spaces, alpha=alpha, center_of_mass=com, gate_stacked=gate
    )

    validation_mean_r = {}
    for name in spaces:
        r, _ = column_correlations(val_preds[name], Y[val_rows])
        validation_mean_r[name] = float(r.mean())
    r_st, _ = column_correlations(stacked_val, Y[val_rows])
    validation_mean_r["stacked"] = float(r_st.mean())

    test_predictions = {}
    for story in manifest.test_stories():
        per_space = {
            name: predict(models[name], build_story_design(manifest, name, story.name, delays_trs, lobes))
            for name in spaces
        }
        stacked = stacked_predict([per_space[name] for name in spaces], alpha)
        final = np.where(gate[None, :], stacked, per_space[baseline])
        entry = {"final": final, "stacked": stacked, "baseline": per_space[baseline]}
        entry.update(per_space)
        test_predictions[story.name] = entry

    return StackResult(
        spaces=spaces,
        baseline=baseline,
        attribution=attribution,
        fit_rows=fit_rows,
        validation_rows=val_rows,
        test_predictions=test_predictions,
        validation_mean_r=validation_mean_r,
    )


def preprocess_dataset(manifest_path, out_dir, window_seconds=120.0, order=2):
    """Write a detrended, z-scored copy of a dataset.

    Responses and every repeat tensor are detrended voxelwise and scaled
    to unit variance; feature tensors are referenced from the new manifest
    unchanged (as absolute paths). Returns the new manifest path.
    """
    manifest = load_manifest(manifest_path)
    out = Path(out_dir)
    (out / "responses").mkdir(parents=True, exist_ok=True)
    (out / "repeats").mkdir(exist_ok=True)

    def transform(series):
        detrended = savgol_detrend(series, manifest.tr_seconds, window_seconds, order)
        normalized, _ = zscore_voxels(detrended)
        return normalized

    doc = {
        "subject_id": manifest.subject_id,
        "tr_seconds": manifest.tr_seconds,
        "stories": [
            {
                "name": s.name,
                "duration_seconds": s.duration_seconds,
                "n_trs": s.n_trs,
                "role": s.role,
            }
            for s in manifest.stories
        ],
        "feature_spaces": {
            space: {
                name: {"tensor": str(ref.tensor.resolve()), "timestamps": str(ref.timestamps.resolve())}
                for name, ref in per_story.items()
            }
            for space, per_story in manifest.feature_spaces.items()
        },
        "responses": {},
        "test_repeats": {},
    }
    for name, path in manifest.responses.items():
        rel = f"responses/{name}.vxt"
        write_tensor(transform(manifest.load_response(name)), out / rel)
        doc["responses"][name] = rel
    for name, paths in manifest.test_repeats.items():
        rels = []
        for i, p in enumerate(paths):
            rel = f"repeats/{name}_r{i:02d}.vxt"
            write_tensor(transform(read_tensor(p)), out / rel)
            rels.append(rel)
        doc["test_repeats"][name] = rels

    new_path = out / "manifest.json"
    with open(new_path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
    load_manifest(new_path)
    return new_path
