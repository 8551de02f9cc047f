#!/usr/bin/env python3
"""Data- and capacity-scaling experiment on simulated data.

Sweeps the number of training stories (nested subsets) and the feature
dimensionality of the simulated stimulus space, fits an encoding model at
every point, and summarizes both curves with log-linear fits. Writes
plot-ready CSVs plus a JSON summary.
"""

import argparse
import csv
import json
import tempfile
from pathlib import Path

import numpy as np

from voxenc.pipeline import fit_space, score_on_tests
from voxenc.ridge import CvConfig
from voxenc.scaling import ScalingSeries, fit_loglinear, story_subsample_plan
from voxenc.synth import FeatureSpaceSpec, SynthSpec, generate


def data_scaling_curve(args, workdir):
    story_counts = [int(s) for s in args.story_counts.split(",")]
    spec = SynthSpec(
        seed=args.seed,
        n_voxels=args.voxels,
        n_train_stories=max(story_counts),
        train_story_trs=args.story_trs,
        test_story_trs=args.test_trs,
        feature_spaces=(FeatureSpaceSpec("semantic", args.features),),
        noise_sd=1.0,
        target_snr=args.snr,
        n_repeats=2,
    )
    manifest, _ = generate(spec, workdir / "data_scaling")
    train_names = [s.name for s in manifest.train_stories()]
    plan = story_subsample_plan(len(train_names), story_counts, seed=args.seed)
    cv = CvConfig(n_bootstraps=args.bootstraps, seed=args.seed)
    scores = []
    for subset in plan:
        names = [train_names[i] for i in subset]
        model = fit_space(manifest, "semantic", cv=cv, stories=names)
        result = score_on_tests(manifest, model, "semantic")
        scores.append(float(result.r.mean()))
        print(f"  {len(names):2d} stories -> mean r {scores[-1]:.4f}")
    return story_counts, scores


def capacity_scaling_curve(args, workdir):
    dims = [int(d) for d in args.feature_dims.split(",")]
    scores = []
    for dim in dims:
        spec = SynthSpec(
            seed=args.seed,
            n_voxels=args.voxels,
            n_train_stories=4,
            train_story_trs=args.story_trs,
            test_story_trs=args.test_trs,
            feature_spaces=(FeatureSpaceSpec("semantic", dim),),
            noise_sd=1.0,
            target_snr=args.snr,
            n_repeats=2,
        )
        manifest, _ = generate(spec, workdir / f"capacity_{dim}")
        cv = CvConfig(n_bootstraps=args.bootstraps, seed=args.seed)
        model = fit_space(manifest, "semantic", cv=cv)
        result = score_on_tests(manifest, model, "semantic")
        scores.append(float(result.r.mean()))
        print(f"  {dim:4d} features -> mean r {scores[-1]:.4f}")
    return dims, scores


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--voxels", type=int, default=40)
    parser.add_argument("--features", type=int, default=16)
    parser.add_argument("--story-trs", type=int, default=150)
    parser.add_argument("--test-trs", type=int, default=200)
    parser.add_argument("--snr", type=float, default=1.0)
    parser.add_argument("--bootstraps", type=int, default=10)
    parser.add_argument("--story-counts", default="1,2,4,8")
    parser.add_argument("--feature-dims", default="4,8,16,32")
    args = parser.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = {}
    with tempfile.TemporaryDirectory() as tmp:
        workdir = Path(tmp)
        print("data scaling:")
        counts, data_scores = data_scaling_curve(args, workdir)
        print("capacity scaling:")
        dims, cap_scores = capacity_scaling_curve(args, workdir)

    for name, sizes, scores in (
        ("data", counts, data_scores),
        ("capacity", dims, cap_scores),
    ):
        fit = fit_loglinear(ScalingSeries(np.asarray(sizes, float), np.asarray(scores)))
        summary[name] = {
            "sizes": sizes,
            "mean_r": scores,
            "slope_per_decade": fit.slope,
            "pearson_r": fit.pearson_r,
        }
        with open(out / f"{name}_curve.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["size", "mean_r"])
            writer.writerows(zip(sizes, scores))
        print(f"{name}: slope {fit.slope:+.4f}/decade (r={fit.pearson_r:.3f})")

    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=1)
    print(f"wrote {out}/summary.json")


if __name__ == "__main__":
    main()
