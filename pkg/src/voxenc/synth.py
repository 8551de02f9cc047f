"""Synthetic datasets with known linear structure.

Every generated voxel is driven by exactly one feature space through
planted weights on the same resampled-and-delayed design the pipeline
builds, so model fits, stacking attributions, ceilings, and scaling
curves all have computable ground truth. Repeats share one noiseless
signal with independent noise draws, which makes the analytic ceiling
formula exact. Generation is bit-deterministic in the spec's seed.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .manifest import load_manifest
from .temporal import DEFAULT_DELAYS_TRS, FeatureTimeSeries, lanczos_resample, make_delayed
from .tensorfile import write_tensor


@dataclass(frozen=True)
class FeatureSpaceSpec:
    name: str
    n_features: int
    weight_scale: float = 1.0


@dataclass
class SynthSpec:
    seed: int = 0
    n_voxels: int = 20
    tr_seconds: float = 2.0
    n_train_stories: int = 2
    train_story_trs: int = 150
    test_story_trs: int = 150
    feature_spaces: tuple = (FeatureSpaceSpec("semantic", 12),)
    drivers: tuple | None = None  # space name per voxel; None -> round robin
    noise_sd: float = 1.0  # scalar or per-voxel sequence
    target_snr: float | None = 1.0  # None -> keep raw planted scale
    n_repeats: int = 10
    item_interval_seconds: float = 0.75
    delays_trs: tuple = DEFAULT_DELAYS_TRS
    lanczos_lobes: int = 3

    def resolved_drivers(self):
        names = [fs.name for fs in self.feature_spaces]
        if self.drivers is None:
            return tuple(names[v % len(names)] for v in range(self.n_voxels))
        drivers = tuple(self.drivers)
        if len(drivers) != self.n_voxels:
            raise ValidationError(
                f"{len(drivers)} drivers for {self.n_voxels} voxels"
            )
        unknown = set(drivers) - set(names)
        if unknown:
            raise ValidationError(f"unknown driver spaces: {sorted(unknown)}")
        return drivers

    def noise_sd_per_voxel(self):
        sd = np.broadcast_to(
            np.asarray(self.noise_sd, dtype=np.float64), (self.n_voxels,)
        ).copy()
        if np.any(sd < 0):
            raise ValidationError("noise_sd must be non-negative")
        return sd

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            doc = json.load(fh)
        doc["feature_spaces"] = tuple(
            FeatureSpaceSpec(**fs) for fs in doc.get("feature_spaces", [])
        ) or cls.feature_spaces
        if doc.get("drivers") is not None:
            doc["drivers"] = tuple(doc["drivers"])
        if "delays_trs" in doc:
            doc["delays_trs"] = tuple(doc["delays_trs"])
        return cls(**doc)


@dataclass
class GroundTruth:
    """Planted structure of a generated dataset."""

    spaces: list
    drivers: tuple
    weights: dict  # space -> (n_delayed_features, n_voxels)
    signal_sd: np.ndarray  # per voxel, on the test story
    noise_sd: np.ndarray
    snr: np.ndarray  # signal variance / noise variance (inf when noiseless)
    cc_max: np.ndarray  # analytic ceiling at spec.n_repeats
    test_signal: np.ndarray  # (n_test_trs, n_voxels), noiseless
    delays_trs: tuple
    manifest_path: Path = field(default=None)


def _story_items(rng, duration, interval, n_features):
    times = np.arange(interval, duration + 1e-9, interval)
    values = rng.standard_normal((times.size, n_features))
    return FeatureTimeSeries(timestamps=times, values=values)


def generate(spec, out_dir):
    """Write a complete synthetic dataset directory and return its truth.

    Emits the manifest, per-space feature tensors with timestamps,
    per-story responses, repeat tensors for the test story, and a
    ground-truth sidecar. The returned manifest has already passed full
    validation.
    """
    out = Path(out_dir)
    (out / "features").mkdir(parents=True, exist_ok=True)
    (out / "responses").mkdir(exist_ok=True)
    (out / "repeats").mkdir(exist_ok=True)
    (out / "ground_truth").mkdir(exist_ok=True)

    if spec.n_voxels < 1 or spec.n_train_stories < 1:
        raise ValidationError("spec counts must be positive")
    drivers = spec.resolved_drivers()
    noise_sd = spec.noise_sd_per_voxel()
    rng = np.random.default_rng(spec.seed)

    stories = [(f"train{i:02d}", spec.train_story_trs, "train") for i in range(spec.n_train_stories)]
    stories.append(("test00", spec.test_story_trs, "test"))

    # Draw order is fixed: weights per space, then per-story items, then
    # training noise, then repeat noise.
    n_delays = len(spec.delays_trs)
    weights = {}
    for fs in spec.feature_spaces:
        w = rng.standard_normal((fs.n_features * n_delays, spec.n_voxels))
        w *= fs.weight_scale / np.sqrt(fs.n_features * n_delays)
        for v, driver in enumerate(drivers):
            if driver != fs.name:
                w[:, v] = 0.0
        weights[fs.name] = w

    items = {}
    for name, n_trs, _ in stories:
        duration = n_trs * spec.tr_seconds
        for fs in spec.feature_spaces:
            items[fs.name, name] = _story_items(
                rng, duration, spec.item_interval_seconds, fs.n_features
            )

    signals = {}
    for name, n_trs, _ in stories:
        tr_times = np.arange(n_trs) * spec.tr_seconds
        signal = np.zeros((n_trs, spec.n_voxels))
        for fs in spec.feature_spaces:
            resampled = lanczos_resample(
                items[fs.name, name], tr_times, lobes=spec.lanczos_lobes
            )
            delayed = make_delayed(resampled, spec.delays_trs)
            signal += delayed.matrix @ weights[fs.name]
        signals[name] = signal

    test_signal = signals["test00"]
    signal_sd = test_signal.std(axis=0)
    if spec.target_snr is not None and np.all(noise_sd > 0):
        if np.any(signal_sd == 0):
            raise ValidationError("planted signal has zero variance on some voxel")
        gain = noise_sd * np.sqrt(spec.target_snr) / signal_sd
        for name in signals:
            signals[name] = signals[name] * gain
        for space in weights:
            weights[space] = weights[space] * gain
        signal_sd = noise_sd * np.sqrt(spec.target_snr)
        test_signal = signals["test00"]

    responses = {}
    for name, n_trs, role in stories:
        if role != "train":
            continue
        noise = rng.standard_normal((n_trs, spec.n_voxels)) * noise_sd
        responses[name] = signals[name] + noise

    repeats = []
    for _ in range(spec.n_repeats):
        noise = rng.standard_normal((spec.test_story_trs, spec.n_voxels)) * noise_sd
        repeats.append(test_signal + noise)
    repeats = np.stack(repeats) if repeats else np.zeros((0,) + test_signal.shape)
    responses["test00"] = repeats.mean(axis=0) if spec.n_repeats else test_signal.copy()

    with np.errstate(divide="ignore"):
        snr = np.where(noise_sd > 0, (signal_sd / np.where(noise_sd > 0, noise_sd, 1.0)) ** 2, np.inf)
    ratio = np.where(np.isinf(snr), 0.0, 1.0 / np.maximum(snr, 1e-300) / max(spec.n_repeats, 1))
    analytic_cc_max = 1.0 / np.sqrt(1.0 + ratio)

    doc = {
        "subject_id": f"synth-seed{spec.seed}",
        "tr_seconds": spec.tr_seconds,
        "stories": [
            {
                "name": name,
                "duration_seconds": n_trs * spec.tr_seconds,
                "n_trs": n_trs,
                "role": role,
            }
            for name, n_trs, role in stories
        ],
        "feature_spaces": {},
        "responses": {},
        "test_repeats": {},
    }

    for fs in spec.feature_spaces:
        space_dir = out / "features" / fs.name
        space_dir.mkdir(parents=True, exist_ok=True)
        per_story = {}
        for name, _, _ in stories:
            series = items[fs.name, name]
            tensor_rel = f"features/{fs.name}/{name}.vxt"
            times_rel = f"features/{fs.name}/{name}_times.vxt"
            write_tensor(series.values, out / tensor_rel)
            write_tensor(series.timestamps, out / times_rel)
            per_story[name] = {"tensor": tensor_rel, "timestamps": times_rel}
        doc["feature_spaces"][fs.name] = per_story

    for name, _, _ in stories:
        rel = f"responses/{name}.vxt"
        write_tensor(responses[name], out / rel)
        doc["responses"][name] = rel

    repeat_rels = []
    for i in range(spec.n_repeats):
        rel = f"repeats/test00_r{i:02d}.vxt"
        write_tensor(repeats[i], out / rel)
        repeat_rels.append(rel)
    if repeat_rels:
        doc["test_repeats"]["test00"] = repeat_rels

    manifest_path = out / "manifest.json"
    with open(manifest_path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)

    for space, w in weights.items():
        write_tensor(w, out / "ground_truth" / f"weights_{space}.vxt")
    write_tensor(signal_sd, out / "ground_truth" / "signal_sd.vxt")
    write_tensor(noise_sd, out / "ground_truth" / "noise_sd.vxt")
    write_tensor(analytic_cc_max, out / "ground_truth" / "cc_max.vxt")
    write_tensor(test_signal, out / "ground_truth" / "test_signal.vxt")
    with open(out / "ground_truth" / "truth.json", "w") as fh:
        json.dump(
            {
                "drivers": list(drivers),
                "spaces": [fs.name for fs in spec.feature_spaces],
                "delays_trs": list(spec.delays_trs),
                "target_snr": spec.target_snr,
                "n_repeats": spec.n_repeats,
                "seed": spec.seed,
            },
            fh,
            indent=1,
            sort_keys=True,
        )

    manifest = load_manifest(manifest_path)
    truth = GroundTruth(
        spaces=[fs.name for fs in spec.feature_spaces],
        drivers=drivers,
        weights=weights,
        signal_sd=signal_sd,
        noise_sd=noise_sd,
        snr=snr,
        cc_max=analytic_cc_max,
        test_signal=test_signal,
        delays_trs=tuple(spec.delays_trs),
        manifest_path=manifest_path,
    )
    return manifest, truth
