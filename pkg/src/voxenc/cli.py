"""Command-line entry point.

Subcommands compose through files: every command reads tensors or
documents, writes tensors/CSVs plus a `run_meta.json` sidecar recording
parameters, seed, and input hashes, and exits 0 on success, 1 on
computation/validation errors, or 2 on usage and IO errors. Identical
inputs and seeds reproduce outputs bit for bit regardless of `--workers`.
"""

import argparse
import csv
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .ceiling import DISPLAY_THRESHOLD, display_mask, estimate_ceiling
from .errors import VoxencError
from .manifest import load_manifest
from .pipeline import (
    build_story_design,
    fit_space,
    preprocess_dataset,
    run_stack,
    score_on_tests,
)
from .preprocess import TrimPolicy
from .ridge import CvConfig, EncodingModel, predict, score
from .scaling import ScalingSeries, fit_loglinear, story_subsample_plan, voxelwise_slopes
from .schedule import audio_plan_document, token_plan_document
from .stacker import StackConfig
from .synth import SynthSpec, generate
from .tensorfile import read_tensor, write_tensor


def _sha256(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_meta(out_dir, command, args, inputs):
    import scipy

    params = {
        k: v for k, v in vars(args).items() if k not in ("func", "out") and v is not None
    }
    meta = {
        "command": command,
        "parameters": params,
        "seed": getattr(args, "seed", None),
        "workers": getattr(args, "workers", None),
        "inputs": {str(p): f"sha256:{_sha256(p)}" for p in inputs},
        "versions": {
            "voxenc": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": sys.version.split()[0],
        },
    }
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "run_meta.json", "w") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _parse_floats(text):
    return tuple(float(x) for x in text.split(",") if x)


def _parse_ints(text):
    return tuple(int(x) for x in text.split(",") if x)


def _require_file(path, what):
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"{what} not found: {p}")
    return p


def _cv_from_args(args):
    return CvConfig(
        n_bootstraps=args.bootstraps,
        chunk_length_trs=args.chunk_trs,
        holdout_fraction=args.holdout,
        alpha_grid=_parse_floats(args.alphas),
        seed=args.seed,
    )


def _policy_from_args(args):
    return TrimPolicy(
        train_trim_volumes=args.trim_train,
        test_extra_volumes=args.trim_test_extra,
        eval_exclusion_seconds=args.trim_eval_seconds,
    )


def cmd_simulate(args):
    spec = SynthSpec.from_json(_require_file(args.spec, "spec")) if args.spec else SynthSpec()
    if args.seed is not None:
        spec.seed = args.seed
    manifest, _ = generate(spec, args.out)
    _write_meta(args.out, "simulate", args, [args.spec] if args.spec else [])
    print(f"wrote dataset with {manifest.n_voxels} voxels to {args.out}")
    return 0


def cmd_plan(args):
    if args.kind == "tokens":
        if args.n_tokens is None:
            raise VoxencError("--n-tokens is required for token plans")
        doc = token_plan_document(args.n_tokens, args.max_context, args.reset_context)
    else:
        if args.duration is None:
            raise VoxencError("--duration is required for audio plans")
        doc = audio_plan_document(args.duration, args.window_seconds, args.stride_seconds)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w") as fh:
        json.dump(doc, fh, indent=1)
    print(f"wrote {len(doc['windows'])} windows to {out}")
    return 0


def cmd_preprocess(args):
    path = _require_file(args.manifest, "manifest")
    new_manifest = preprocess_dataset(path, args.out, args.window_seconds, args.order)
    _write_meta(args.out, "preprocess", args, [path])
    print(f"wrote preprocessed dataset manifest to {new_manifest}")
    return 0


def cmd_fit(args):
    path = _require_file(args.manifest, "manifest")
    manifest = load_manifest(path)
    stories = None
    if args.n_stories:
        train_names = [s.name for s in manifest.train_stories()]
        plan = story_subsample_plan(len(train_names), [args.n_stories], seed=args.subsample_seed)
        stories = [train_names[i] for i in plan[0]]
    model = fit_space(
        manifest,
        args.space,
        cv=_cv_from_args(args),
        delays_trs=_parse_ints(args.delays),
        policy=_policy_from_args(args),
        stories=stories,
        layer_id=args.layer,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_tensor(model.weights, out / "weights.vxt")
    write_tensor(model.alpha_per_voxel, out / "alpha.vxt")
    with open(out / "model.json", "w") as fh:
        json.dump(
            {
                "feature_space_id": model.feature_space_id,
                "layer_id": model.layer_id,
                "training_meta": model.training_meta,
            },
            fh,
            indent=1,
            sort_keys=True,
        )
    _write_meta(out, "fit", args, [path])
    print(
        f"fit {args.space}: {model.weights.shape[0]} regressors x "
        f"{model.weights.shape[1]} voxels, mean CV r "
        f"{model.training_meta['mean_cv_r']:.4f}"
    )
    return 0


def load_model_dir(model_dir):
    model_dir = Path(model_dir)
    _require_file(model_dir / "model.json", "model description")
    with open(model_dir / "model.json") as fh:
        doc = json.load(fh)
    return EncodingModel(
        weights=read_tensor(model_dir / "weights.vxt"),
        alpha_per_voxel=read_tensor(model_dir / "alpha.vxt"),
        feature_space_id=doc["feature_space_id"],
        layer_id=doc["layer_id"],
        training_meta=doc["training_meta"],
    )


def cmd_score(args):
    path = _require_file(args.manifest, "manifest")
    manifest = load_manifest(path)
    model = load_model_dir(args.model)
    result = score_on_tests(
        manifest,
        model,
        model.feature_space_id,
        delays_trs=tuple(model.training_meta.get("delays_trs", _parse_ints(args.delays))),
        policy=_policy_from_args(args),
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_tensor(result.r, out / "r.vxt")
    _write_csv(
        out / "scores.csv",
        ["voxel_id", "r", "r_signed_sq"],
        [(v, repr(float(result.r[v])), repr(float(result.r_signed_sq[v]))) for v in range(result.r.size)],
    )
    _write_meta(out, "score", args, [path, Path(args.model) / "model.json"])
    print(f"scored {result.r.size} voxels: mean r {result.r.mean():.4f}")
    return 0


def cmd_stack(args):
    path = _require_file(args.manifest, "manifest")
    manifest = load_manifest(path)
    spaces = [s for s in args.spaces.split(",") if s]
    cfg = StackConfig(
        n_folds=args.folds,
        validation_fraction=args.validation_fraction,
        chunk_length_trs=args.chunk_trs,
        gate_block_trs=args.gate_block_trs,
        gate_bootstraps=args.gate_bootstraps,
        seed=args.seed,
    )
    result = run_stack(
        manifest,
        spaces,
        args.baseline,
        cv=_cv_from_args(args),
        stack_cfg=cfg,
        delays_trs=_parse_ints(args.delays),
        policy=_policy_from_args(args),
        workers=args.workers,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    att = result.attribution
    write_tensor(att.alpha, out / "alpha.vxt")
    write_tensor(att.gate_stacked.astype(np.float64), out / "gate.vxt")
    _write_csv(
        out / "center_of_mass.csv",
        ["voxel_id", "center_of_mass", "gate"],
        [
            (v, repr(float(att.center_of_mass[v])), "stacked" if att.gate_stacked[v] else "baseline")
            for v in range(att.alpha.shape[0])
        ],
    )
    for story, preds in result.test_predictions.items():
        write_tensor(preds["final"], out / f"final_pred_{story}.vxt")
    with open(out / "stack_summary.json", "w") as fh:
        json.dump(
            {
                "spaces": result.spaces,
                "baseline": result.baseline,
                "validation_mean_r": result.validation_mean_r,
                "gated_to_stacked": int(att.gate_stacked.sum()),
                "n_voxels": int(att.alpha.shape[0]),
            },
            fh,
            indent=1,
            sort_keys=True,
        )
    _write_meta(out, "stack", args, [path])
    print(
        f"stacked {len(spaces)} spaces over {att.alpha.shape[0]} voxels; "
        f"{int(att.gate_stacked.sum())} gated to stacked"
    )
    return 0


def cmd_ceiling(args):
    path = _require_file(args.manifest, "manifest")
    manifest = load_manifest(path)
    stories = [args.story] if args.story else list(manifest.test_repeats)
    if not stories:
        raise VoxencError("manifest lists no test repeats")
    policy = _policy_from_args(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for story in stories:
        repeats = manifest.load_repeats(story)
        if repeats.shape[0] < 2:
            raise VoxencError(f"story {story!r} needs >= 2 repeats for a ceiling")
        drop = policy.eval_exclusion_volumes(manifest.tr_seconds)
        if drop >= repeats.shape[1]:
            raise VoxencError(f"story {story!r} shorter than the exclusion window")
        est = estimate_ceiling(repeats[:, drop:, :])
        mask = display_mask(est)
        write_tensor(
            np.column_stack([est.signal_power, est.noise_power, est.cc_max, est.cc_max_clamped]),
            out / f"ceiling_{story}.vxt",
        )
        _write_csv(
            out / f"ceiling_{story}.csv",
            ["voxel_id", "signal_power", "noise_power", "cc_max", "cc_max_clamped", "display"],
            [
                (
                    v,
                    repr(float(est.signal_power[v])),
                    repr(float(est.noise_power[v])),
                    repr(float(est.cc_max[v])),
                    repr(float(est.cc_max_clamped[v])),
                    int(mask[v]),
                )
                for v in range(est.cc_max.size)
            ],
        )
        print(
            f"{story}: median cc_max {np.median(est.cc_max):.4f}, "
            f"{int(mask.sum())}/{mask.size} voxels above {DISPLAY_THRESHOLD}"
        )
    _write_meta(out, "ceiling", args, [path])
    return 0


def cmd_scaling(args):
    score_paths = [_require_file(p, "score csv") for p in args.scores.split(",") if p]
    sizes = _parse_floats(args.sizes)
    if len(score_paths) != len(sizes):
        raise VoxencError(
            f"{len(score_paths)} score files but {len(sizes)} sizes"
        )
    per_size = []
    for p in score_paths:
        with open(p) as fh:
            reader = csv.DictReader(fh)
            per_size.append(np.array([float(row["r"]) for row in reader]))
    scores = np.stack(per_size)
    series = ScalingSeries(sizes=np.asarray(sizes), scores=scores)
    aggregate = ScalingSeries(sizes=np.asarray(sizes), scores=scores.mean(axis=1))
    fit = fit_loglinear(aggregate, log_base=args.log_base)
    slopes = voxelwise_slopes(series, log_base=args.voxel_log_base)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "fit.json", "w") as fh:
        json.dump(
            {
                "slope_per_log_unit": fit.slope,
                "intercept": fit.intercept,
                "pearson_r": fit.pearson_r,
                "log_base": fit.log_base,
                "degenerate": fit.degenerate,
                "voxel_log_base": args.voxel_log_base,
            },
            fh,
            indent=1,
            sort_keys=True,
        )
    write_tensor(slopes, out / "voxel_slopes.vxt")
    _write_csv(
        out / "voxel_slopes.csv",
        ["voxel_id", "slope"],
        [(v, repr(float(slopes[v]))) for v in range(slopes.size)],
    )
    _write_meta(out, "scaling", args, score_paths)
    print(
        f"aggregate slope {fit.slope:.6g} per log{args.log_base:g} unit "
        f"(r={fit.pearson_r:.4f})"
    )
    return 0


def _add_common(parser, manifest=True):
    if manifest:
        parser.add_argument("--manifest", required=True, help="dataset manifest path")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--workers", type=int, default=1)


def _add_cv(parser):
    parser.add_argument("--alphas", default="1e1,3.6e1,1.3e2,4.6e2,1.7e3,6e3,2.2e4,7.7e4,2.8e5,1e6")
    parser.add_argument("--bootstraps", type=int, default=15)
    parser.add_argument("--chunk-trs", type=int, default=20)
    parser.add_argument("--holdout", type=float, default=0.2)
    parser.add_argument("--delays", default="1,2,3,4")


def _add_trim(parser):
    parser.add_argument("--trim-train", type=int, default=10)
    parser.add_argument("--trim-test-extra", type=int, default=40)
    parser.add_argument("--trim-eval-seconds", type=float, default=100.0)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="voxenc",
        description="Voxelwise encoding-model pipeline over a binary tensor interchange format.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic dataset with known structure")
    p.add_argument("--spec", help="SynthSpec JSON (defaults used when omitted)")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None, help="override the spec seed")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("plan", help="emit a context-window plan document")
    p.add_argument("--kind", choices=["tokens", "audio"], required=True)
    p.add_argument("--n-tokens", type=int)
    p.add_argument("--max-context", type=int, default=512)
    p.add_argument("--reset-context", type=int, default=256)
    p.add_argument("--duration", type=float)
    p.add_argument("--window-seconds", type=float, default=16.0)
    p.add_argument("--stride-seconds", type=float, default=0.1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("preprocess", help="detrend and z-score a dataset's responses")
    _add_common(p)
    p.add_argument("--window-seconds", type=float, default=120.0)
    p.add_argument("--order", type=int, default=2)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("fit", help="fit one feature space's encoding model")
    _add_common(p)
    _add_cv(p)
    _add_trim(p)
    p.add_argument("--space", required=True)
    p.add_argument("--layer", type=int, default=0)
    p.add_argument("--n-stories", type=int, default=0, help="train on a nested story subset")
    p.add_argument("--subsample-seed", type=int, default=0)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("score", help="score a fitted model on the test stories")
    _add_common(p)
    _add_trim(p)
    p.add_argument("--model", required=True, help="directory written by fit")
    p.add_argument("--delays", default="1,2,3,4")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("stack", help="combine feature spaces with convex attribution weights")
    _add_common(p)
    _add_cv(p)
    _add_trim(p)
    p.add_argument("--spaces", required=True, help="comma-separated feature space names")
    p.add_argument("--baseline", required=True, help="space used where the gate rejects the stack")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--validation-fraction", type=float, default=0.15)
    p.add_argument("--gate-block-trs", type=int, default=20)
    p.add_argument("--gate-bootstraps", type=int, default=1000)
    p.set_defaults(func=cmd_stack)

    p = sub.add_parser("ceiling", help="estimate per-voxel noise ceilings from repeats")
    _add_common(p)
    _add_trim(p)
    p.add_argument("--story", help="test story (defaults to every story with repeats)")
    p.set_defaults(func=cmd_ceiling)

    p = sub.add_parser("scaling", help="fit log-linear scaling curves from score CSVs")
    p.add_argument("--scores", required=True, help="comma-separated scores.csv paths")
    p.add_argument("--sizes", required=True, help="comma-separated attribute sizes")
    p.add_argument("--log-base", type=float, default=10.0)
    p.add_argument("--voxel-log-base", type=float, default=2.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_scaling)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(json.dumps({"error": "io", "message": str(exc)}), file=sys.stderr)
        return 2
    except (json.JSONDecodeError, OSError) as exc:
        print(json.dumps({"error": "io", "message": str(exc)}), file=sys.stderr)
        return 2
    except VoxencError as exc:
        print(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}),
            file=sys.stderr,
        )
        return 1


if __name__ == "__main__":
    sys.exit(main())
