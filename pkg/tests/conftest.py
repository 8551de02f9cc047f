import json

import numpy as np
import pytest

from voxenc.tensorfile import write_tensor


@pytest.fixture
def tiny_dataset(tmp_path):
    """Hand-built two-story dataset: one train, one test with repeats."""

    def build(n_voxels=5, n_trs=30, n_repeats=3, voxel_override=None):
        rng = np.random.default_rng(0)
        root = tmp_path / "data"
        (root / "features" / "semantic").mkdir(parents=True, exist_ok=True)
        (root / "responses").mkdir(exist_ok=True)
        (root / "repeats").mkdir(exist_ok=True)
        tr = 2.0
        stories = [
            {"name": "alpha", "duration_seconds": n_trs * tr, "n_trs": n_trs, "role": "train"},
            {"name": "beta", "duration_seconds": n_trs * tr, "n_trs": n_trs, "role": "test"},
        ]
        doc = {
            "subject_id": "tiny",
            "tr_seconds": tr,
            "stories": stories,
            "feature_spaces": {"semantic": {}},
            "responses": {},
            "test_repeats": {},
        }
        for i, story in enumerate(stories):
            name = story["name"]
            times = np.arange(0.5, story["duration_seconds"], 0.5)
            feats = rng.normal(size=(times.size, 4))
            write_tensor(feats, root / f"features/semantic/{name}.vxt")
            write_tensor(times, root / f"features/semantic/{name}_times.vxt")
            doc["feature_spaces"]["semantic"][name] = {
                "tensor": f"features/semantic/{name}.vxt",
                "timestamps": f"features/semantic/{name}_times.vxt",
            }
            v = n_voxels if voxel_override is None or i == 0 else voxel_override
            write_tensor(rng.normal(size=(n_trs, v)), root / f"responses/{name}.vxt")
            doc["responses"][name] = f"responses/{name}.vxt"
        rels = []
        for k in range(n_repeats):
            rel = f"repeats/beta_r{k}.vxt"
            write_tensor(rng.normal(size=(n_trs, n_voxels)), root / rel)
            rels.append(rel)
        doc["test_repeats"]["beta"] = rels
        path = root / "manifest.json"
        path.write_text(json.dumps(doc))
        return path, doc

    return build
