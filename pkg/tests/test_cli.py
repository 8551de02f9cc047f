import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from voxenc.cli import main
from voxenc.synth import FeatureSpaceSpec, SynthSpec, generate
from voxenc.tensorfile import read_tensor


def run_cli(*args):
    return main([str(a) for a in args])


@pytest.fixture
def noiseless_dataset(tmp_path):
    spec = SynthSpec(
        seed=21,
        n_voxels=6,
        n_train_stories=2,
        train_story_trs=140,
        test_story_trs=120,
        feature_spaces=(FeatureSpaceSpec("semantic", 5),),
        noise_sd=0.0,
        target_snr=None,
        n_repeats=2,
    )
    data = tmp_path / "data"
    generate(spec, data)
    return data


def test_simulate_fit_score_noiseless(tmp_path, noiseless_dataset, capsys):
    model_dir = tmp_path / "model"
    out = run_cli(
        "fit",
        "--manifest", noiseless_dataset / "manifest.json",
        "--space", "semantic",
        "--out", model_dir,
        "--bootstraps", 5,
        "--alphas", "1e-4,1e-2,1,10",
    )
    assert out == 0
    score_dir = tmp_path / "scores"
    assert run_cli(
        "score",
        "--manifest", noiseless_dataset / "manifest.json",
        "--model", model_dir,
        "--out", score_dir,
    ) == 0
    r = read_tensor(score_dir / "r.vxt")
    assert r.mean() >= 0.999
    with open(score_dir / "scores.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 6
    assert float(rows[0]["r"]) >= 0.999
    assert set(rows[0]) == {"voxel_id", "r", "r_signed_sq"}


def test_missing_manifest_exits_2(tmp_path, capsys):
    code = run_cli(
        "fit",
        "--manifest", tmp_path / "absent.json",
        "--space", "semantic",
        "--out", tmp_path / "out",
    )
    assert code == 2
    err = capsys.readouterr().err.strip()
    assert len(err.splitlines()) == 1
    parsed = json.loads(err)
    assert "absent.json" in parsed["message"]


def test_unknown_flag_exits_2(noiseless_dataset, tmp_path):
    proc = subprocess.run(
        [
            sys.executable, "-m", "voxenc", "fit",
            "--manifest", str(noiseless_dataset / "manifest.json"),
            "--space", "semantic",
            "--out", str(tmp_path / "x"),
            "--definitely-not-a-flag",
        ],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 2


def test_validation_error_exits_1(noiseless_dataset, tmp_path, capsys):
    code = run_cli(
        "fit",
        "--manifest", noiseless_dataset / "manifest.json",
        "--space", "semantic",
        "--out", tmp_path / "out",
        "--alphas", "0.0,1.0",
    )
    assert code == 1
    parsed = json.loads(capsys.readouterr().err.strip())
    assert parsed["error"] == "ValidationError"


def test_meta_sidecar_written(tmp_path, noiseless_dataset):
    model_dir = tmp_path / "model"
    run_cli(
        "fit",
        "--manifest", noiseless_dataset / "manifest.json",
        "--space", "semantic",
        "--out", model_dir,
        "--seed", 42,
        "--bootstraps", 3,
    )
    meta = json.loads((model_dir / "run_meta.json").read_text())
    assert meta["command"] == "fit"
    assert meta["seed"] == 42
    assert meta["parameters"]["space"] == "semantic"
    assert any(k.endswith("manifest.json") for k in meta["inputs"])
    assert next(iter(meta["inputs"].values())).startswith("sha256:")
    assert "voxenc" in meta["versions"] and "numpy" in meta["versions"]


def test_fit_rerun_is_bit_identical(tmp_path, noiseless_dataset):
    for name in ("m1", "m2"):
        run_cli(
            "fit",
            "--manifest", noiseless_dataset / "manifest.json",
            "--space", "semantic",
            "--out", tmp_path / name,
            "--seed", 5,
            "--bootstraps", 4,
        )
    w1 = (tmp_path / "m1" / "weights.vxt").read_bytes()
    w2 = (tmp_path / "m2" / "weights.vxt").read_bytes()
    assert w1 == w2


def test_plan_documents(tmp_path):
    token_plan = tmp_path / "tokens.json"
    assert run_cli("plan", "--kind", "tokens", "--n-tokens", 600, "--out", token_plan) == 0
    doc = json.loads(token_plan.read_text())
    assert doc["kind"] == "tokens"
    assert len(doc["windows"]) == 600
    assert doc["windows"][512] == {"target": 513, "start": 256, "end": 513}

    audio_plan = tmp_path / "audio.json"
    assert run_cli("plan", "--kind", "audio", "--duration", 17.0, "--out", audio_plan) == 0
    doc = json.loads(audio_plan.read_text())
    assert len(doc["windows"]) == 170
    assert doc["windows"][-1]["start"] == pytest.approx(1.0)


def test_simulate_from_spec_json(tmp_path):
    spec_doc = {
        "seed": 9,
        "n_voxels": 4,
        "n_train_stories": 1,
        "train_story_trs": 60,
        "test_story_trs": 50,
        "feature_spaces": [{"name": "semantic", "n_features": 3}],
        "n_repeats": 2,
    }
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(json.dumps(spec_doc))
    assert run_cli("simulate", "--spec", spec_path, "--out", tmp_path / "sim") == 0
    assert (tmp_path / "sim" / "manifest.json").exists()
    assert read_tensor(tmp_path / "sim" / "responses/test00.vxt").shape == (50, 4)


def test_preprocess_then_fit(tmp_path):
    spec = SynthSpec(
        seed=33,
        n_voxels=5,
        n_train_stories=2,
        train_story_trs=150,
        test_story_trs=120,
        feature_spaces=(FeatureSpaceSpec("semantic", 4),),
        noise_sd=1.0,
        target_snr=2.0,
        n_repeats=3,
    )
    data = tmp_path / "data"
    generate(spec, data)
    pre = tmp_path / "pre"
    assert run_cli("preprocess", "--manifest", data / "manifest.json", "--out", pre) == 0
    resp = read_tensor(pre / "responses" / "train00.vxt")
    assert np.abs(resp.mean(axis=0)).max() < 1e-10
    assert np.abs(resp.var(axis=0) - 1.0).max() < 1e-6
    model_dir = tmp_path / "model"
    assert run_cli(
        "fit",
        "--manifest", pre / "manifest.json",
        "--space", "semantic",
        "--out", model_dir,
        "--bootstraps", 3,
    ) == 0


def test_ceiling_command(tmp_path):
    spec = SynthSpec(
        seed=14,
        n_voxels=4,
        n_train_stories=1,
        train_story_trs=60,
        test_story_trs=400,
        feature_spaces=(FeatureSpaceSpec("semantic", 3),),
        noise_sd=1.0,
        target_snr=1.0,
        n_repeats=6,
    )
    data = tmp_path / "data"
    generate(spec, data)
    out = tmp_path / "ceil"
    assert run_cli(
        "ceiling", "--manifest", data / "manifest.json", "--out", out,
        "--trim-eval-seconds", 100,
    ) == 0
    tensor = read_tensor(out / "ceiling_test00.vxt")
    assert tensor.shape == (4, 4)
    with open(out / "ceiling_test00.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 4
    expected = 1.0 / np.sqrt(1.0 + 1.0 / 6.0)
    assert abs(float(rows[0]["cc_max"]) - expected) < 0.15


def test_scaling_command(tmp_path):
    paths = []
    sizes = [1.0, 2.0, 4.0]
    rng = np.random.default_rng(0)
    base = rng.uniform(0.1, 0.3, size=8)
    slope = rng.uniform(0.01, 0.05, size=8)
    for s in sizes:
        p = tmp_path / f"scores_{int(s)}.csv"
        with open(p, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["voxel_id", "r", "r_signed_sq"])
            for v in range(8):
                r = base[v] + slope[v] * np.log2(s)
                writer.writerow([v, repr(float(r)), repr(float(abs(r) * r))])
        paths.append(str(p))
    out = tmp_path / "scaling"
    assert run_cli(
        "scaling", "--scores", ",".join(paths), "--sizes", "1,2,4",
        "--out", out, "--log-base", 2,
    ) == 0
    fit = json.loads((out / "fit.json").read_text())
    assert fit["pearson_r"] == pytest.approx(1.0, abs=1e-9)
    assert fit["slope_per_log_unit"] == pytest.approx(float(slope.mean()), abs=1e-9)
    slopes = read_tensor(out / "voxel_slopes.vxt")
    assert np.abs(slopes - slope).max() < 1e-9


def test_stack_command(tmp_path):
    spec = SynthSpec(
        seed=3,
        n_voxels=10,
        n_train_stories=2,
        train_story_trs=220,
        test_story_trs=160,
        feature_spaces=(
            FeatureSpaceSpec("audio", 6),
            FeatureSpaceSpec("semantic", 6),
        ),
        drivers=("audio",) * 5 + ("semantic",) * 5,
        noise_sd=1.0,
        target_snr=2.0,
        n_repeats=2,
    )
    data = tmp_path / "data"
    generate(spec, data)
    out = tmp_path / "stack"
    assert run_cli(
        "stack",
        "--manifest", data / "manifest.json",
        "--spaces", "audio,semantic",
        "--baseline", "semantic",
        "--out", out,
        "--bootstraps", 3,
        "--gate-bootstraps", 120,
    ) == 0
    alpha = read_tensor(out / "alpha.vxt")
    assert alpha.shape == (10, 2)
    assert np.abs(alpha.sum(axis=1) - 1.0).max() < 1e-6
    gate = read_tensor(out / "gate.vxt")
    assert set(np.unique(gate)) <= {0.0, 1.0}
    assert (out / "final_pred_test00.vxt").exists()
    with open(out / "center_of_mass.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 10 and "center_of_mass" in rows[0]
