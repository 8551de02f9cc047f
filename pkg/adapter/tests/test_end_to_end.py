"""End-to-end interchange: adapter output feeding the encoding pipeline.

These tests treat the pipeline as an external tool: plans come from its
`plan` subcommand, features go out as interchange tensors plus manifest
fragments, and the pipeline's `fit`/`score` run on them via subprocess.
"""

import csv
import json
import shutil
import subprocess

import numpy as np
import pytest
import torch

from vxtract.cli import main as vxtract_main
from vxtract.jobs import WordTiming
from vxtract.tensorio import read_tensor, write_tensor
from vxtract.textmodel import tokenize_words

from conftest import make_transcript

VOXENC = shutil.which("voxenc")
pytestmark = pytest.mark.skipif(VOXENC is None, reason="encoding pipeline CLI not installed")

TR = 2.0
WORD_DURATION = 0.4


def run_pipeline(*args):
    return subprocess.run([VOXENC, *map(str, args)], capture_output=True, text=True)


def extract_story(tmp_path, model_dir, story, n_words, seed):
    """Chain: transcript -> pipeline plan -> adapter extraction."""
    from transformers import AutoTokenizer

    story_dir = tmp_path / story
    story_dir.mkdir()
    transcript = make_transcript(story_dir / "transcript.json", n_words, story=story,
                                 word_duration=WORD_DURATION, rng_seed=seed)
    tokenizer = AutoTokenizer.from_pretrained(model_dir)
    doc = json.loads(transcript.read_text())
    words = [WordTiming(w["word"], w["start"], w["end"]) for w in doc["words"]]
    ids, _ = tokenize_words(tokenizer, words)

    plan = story_dir / "plan.json"
    proc = run_pipeline("plan", "--kind", "tokens", "--n-tokens", len(ids), "--out", plan)
    assert proc.returncode == 0, proc.stderr

    job = {
        "kind": "text",
        "model_dir": str(model_dir),
        "layers": [1, 2],
        "transcript": "transcript.json",
        "plan": "plan.json",
        "out_dir": "features",
        "space_prefix": "tinylm",
    }
    job_path = story_dir / "job.json"
    job_path.write_text(json.dumps(job))
    assert vxtract_main(["--job", str(job_path)]) == 0
    fragment = json.loads((story_dir / "features" / f"tinylm_{story}_fragment.json").read_text())
    return story_dir, fragment, len(words)


def test_adapter_output_drives_a_full_fit(tmp_path, tiny_lm_dir):
    rng = np.random.default_rng(0)
    stories = []
    for story, n_words, seed in (("story01", 120, 1), ("story02", 120, 2), ("test00", 120, 3)):
        stories.append(extract_story(tmp_path, tiny_lm_dir, story, n_words, seed))

    n_voxels = 7
    manifest = {
        "subject_id": "adapter-e2e",
        "tr_seconds": TR,
        "stories": [],
        "feature_spaces": {},
        "responses": {},
        "test_repeats": {},
    }
    for (story_dir, fragment, n_words), role in zip(stories, ("train", "train", "test")):
        story = story_dir.name
        duration = n_words * WORD_DURATION
        n_trs = int(round(duration / TR))
        manifest["stories"].append(
            {"name": story, "duration_seconds": duration, "n_trs": n_trs, "role": role}
        )
        for space, per_story in fragment["feature_spaces"].items():
            entry = per_story[story]
            manifest["feature_spaces"].setdefault(space, {})[story] = {
                "tensor": str((story_dir / "features" / entry["tensor"]).relative_to(tmp_path)),
                "timestamps": str(
                    (story_dir / "features" / entry["timestamps"]).relative_to(tmp_path)
                ),
            }
        response_rel = f"{story}_bold.vxt"
        write_tensor(rng.normal(size=(n_trs, n_voxels)), tmp_path / response_rel)
        manifest["responses"][story] = response_rel

    manifest_path = tmp_path / "manifest.json"
    manifest_path.write_text(json.dumps(manifest))

    # emitted feature tensors parse through the pipeline's reader
    for space, per_story in manifest["feature_spaces"].items():
        for story, entry in per_story.items():
            feats = read_tensor(tmp_path / entry["tensor"])
            times = read_tensor(tmp_path / entry["timestamps"])
            assert feats.shape[0] == times.shape[0]

    model_dir = tmp_path / "model"
    proc = run_pipeline(
        "fit", "--manifest", manifest_path, "--space", "tinylm.L2", "--out", model_dir,
        "--bootstraps", 3, "--chunk-trs", 4, "--trim-train", 2, "--delays", "1,2",
    )
    assert proc.returncode == 0, proc.stderr
    assert (model_dir / "weights.vxt").exists()

    score_dir = tmp_path / "scores"
    proc = run_pipeline(
        "score", "--manifest", manifest_path, "--model", model_dir, "--out", score_dir,
        "--trim-eval-seconds", 8,
    )
    assert proc.returncode == 0, proc.stderr
    with open(score_dir / "scores.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == n_voxels
    assert all(-1.0 <= float(row["r"]) <= 1.0 for row in rows)
    print("\nADAPTER ACCEPTANCE PASS: pipeline fit+score ran on adapter output")


def test_cached_extraction_matches_fresh_window_at_first_reset(tmp_path, tiny_lm_dir):
    """Token 513's state from the cached run equals a fresh forward pass
    over its reset window, within float32 kernel-order noise."""
    from transformers import AutoModelForCausalLM, AutoTokenizer

    from vxtract.jobs import load_token_plan
    from vxtract.textmodel import extract_token_states

    tokenizer = AutoTokenizer.from_pretrained(tiny_lm_dir)
    model = AutoModelForCausalLM.from_pretrained(tiny_lm_dir, dtype=torch.float32)
    model.eval()

    transcript = make_transcript(tmp_path / "t.json", 620, rng_seed=9)
    doc = json.loads(transcript.read_text())
    words = [WordTiming(w["word"], w["start"], w["end"]) for w in doc["words"]]
    ids, _ = tokenize_words(tokenizer, words)
    assert len(ids) >= 514

    plan_path = tmp_path / "plan.json"
    proc = run_pipeline("plan", "--kind", "tokens", "--n-tokens", len(ids), "--out", plan_path)
    assert proc.returncode == 0, proc.stderr
    windows = load_token_plan(plan_path)

    per_token, _, _ = extract_token_states(model, ids, windows, [2])
    start, end = windows[513 - 1]
    assert start == 256 and end == 513
    with torch.no_grad():
        fresh = model(
            torch.tensor(ids[start - 1 : end], dtype=torch.long)[None, :],
            output_hidden_states=True,
        ).hidden_states[2][0, -1].float().numpy()
    diff = float(np.abs(per_token[2][512] - fresh).max())
    assert diff < 1e-4, diff
    print(f"\nADAPTER ACCEPTANCE PASS: cached token-513 state matches fresh window (max diff {diff:.2e})")
