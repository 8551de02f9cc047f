"""Dataset manifests: stories, feature spaces, responses, and test repeats.

A manifest is a JSON document whose paths are resolved relative to its own
directory, so a dataset directory can be moved or mounted anywhere.
Loading validates the whole document eagerly: either every referenced
tensor exists with consistent shapes, or an error names the offender.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ManifestError
from .tensorfile import read_tensor, read_tensor_header


@dataclass(frozen=True)
class StoryEntry:
    name: str
    duration_seconds: float
    n_trs: int
    role: str  # "train" or "test"


@dataclass(frozen=True)
class FeatureSeriesRef:
    """Paths to one story's feature matrix and its per-item timestamps."""

    tensor: Path
    timestamps: Path


@dataclass
class DatasetManifest:
    subject_id: str
    tr_seconds: float
    stories: list[StoryEntry]
    feature_spaces: dict[str, dict[str, FeatureSeriesRef]]
    responses: dict[str, Path]
    test_repeats: dict[str, list[Path]]
    n_voxels: int = 0
    root: Path = field(default_factory=Path)

    def story(self, name):
        for entry in self.stories:
            if entry.name == name:
                return entry
        raise ManifestError(f"unknown story {name!r}")

    def train_stories(self):
        return [s for s in self.stories if s.role == "train"]

    def test_stories(self):
        return [s for s in self.stories if s.role == "test"]

    def load_response(self, story_name):
        return read_tensor(self.responses[story_name])

    def load_repeats(self, story_name):
        """Stack a test story's repeat tensors into (n_repeats, n_trs, n_voxels)."""
        paths = self.test_repeats.get(story_name, [])
        if not paths:
            raise ManifestError(f"story {story_name!r} has no repeats")
        return np.stack([read_tensor(p) for p in paths])

    def load_features(self, space, story_name):
        """Return (timestamps, values) for one feature space and story."""
        ref = self.feature_spaces[space][story_name]
        return read_tensor(ref.timestamps), read_tensor(ref.tensor)


def _require(doc, key, kind, where):
    if key not in doc:
        raise ManifestError(f"{where}: missing field {key!r}")
    value = doc[key]
    if not isinstance(value, kind):
        raise ManifestError(f"{where}: field {key!r} has wrong type")
    return value


def _check_tensor(path, where):
    if not path.is_file():
        raise ManifestError(f"{where}: referenced file {path} does not exist")
    try:
        return read_tensor_header(path)
    except Exception as exc:
        raise ManifestError(f"{where}: {exc}") from exc


def load_manifest(path):
    """Parse and fully validate a manifest document.

    Checks performed before anything is returned: every referenced path
    resolves to a readable tensor of the right shape, all response and
    repeat tensors agree on the voxel count, story timestamps are strictly
    increasing, and declared TR counts match story durations.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"manifest not found: {path}")
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"{path}: not valid JSON: {exc}") from exc
    root = path.parent
    where = str(path)

    subject_id = _require(doc, "subject_id", str, where)
    tr_seconds = float(_require(doc, "tr_seconds", (int, float), where))
    if tr_seconds <= 0:
        raise ManifestError(f"{where}: tr_seconds must be positive")

    stories = []
    seen = set()
    for raw in _require(doc, "stories", list, where):
        entry = StoryEntry(
            name=_require(raw, "name", str, where),
            duration_seconds=float(_require(raw, "duration_seconds", (int, float), where)),
            n_trs=int(_require(raw, "n_trs", int, where)),
            role=_require(raw, "role", str, where),
        )
        if entry.role not in ("train", "test"):
            raise ManifestError(f"{where}: story {entry.name!r} has bad role {entry.role!r}")
        if entry.duration_seconds <= 0 or entry.n_trs <= 0:
            raise ManifestError(f"{where}: story {entry.name!r} must have positive duration and n_trs")
        if abs(entry.n_trs - entry.duration_seconds / tr_seconds) > 1.0:
            raise ManifestError(
                f"{where}: story {entry.name!r}: n_trs {entry.n_trs} does not match "
                f"duration {entry.duration_seconds}s at TR {tr_seconds}s"
            )
        if entry.name in seen:
            raise ManifestError(f"{where}: duplicate story {entry.name!r}")
        seen.add(entry.name)
        stories.append(entry)
    if not stories:
        raise ManifestError(f"{where}: no stories declared")
    by_name = {s.name: s for s in stories}

    n_voxels = 0
    voxel_source = ""

    def check_response_like(p, story, label):
        nonlocal n_voxels, voxel_source
        _, shape = _check_tensor(p, where)
        if len(shape) != 2:
            raise ManifestError(f"{where}: {label} for {story.name!r} is not 2-d")
        if shape[0] != story.n_trs:
            raise ManifestError(
                f"{where}: {label} for {story.name!r} has {shape[0]} rows, "
                f"expected n_trs={story.n_trs}"
            )
        if n_voxels == 0:
            n_voxels = shape[1]
            voxel_source = story.name
        elif shape[1] != n_voxels:
            raise ManifestError(
                f"{where}: voxel-count mismatch: story {story.name!r} has "
                f"{shape[1]} voxels but {voxel_source!r} has {n_voxels}"
            )

    responses = {}
    for name, rel in _require(doc, "responses", dict, where).items():
        if name not in by_name:
            raise ManifestError(f"{where}: responses refer to undeclared story {name!r}")
        p = root / rel
        check_response_like(p, by_name[name], "response tensor")
        responses[name] = p

    test_repeats = {}
    for name, rels in doc.get("test_repeats", {}).items():
        if name not in by_name:
            raise ManifestError(f"{where}: test_repeats refer to undeclared story {name!r}")
        if by_name[name].role != "test":
            raise ManifestError(f"{where}: repeats listed for non-test story {name!r}")
        paths = []
        for rel in rels:
            p = root / rel
            check_response_like(p, by_name[name], "repeat tensor")
            paths.append(p)
        test_repeats[name] = paths

    feature_spaces = {}
    for space, per_story in _require(doc, "feature_spaces", dict, where).items():
        refs = {}
        for name, entry in per_story.items():
            if name not in by_name:
                raise ManifestError(
                    f"{where}: feature space {space!r} refers to undeclared story {name!r}"
                )
            tensor_path = root / _require(entry, "tensor", str, f"{where}:{space}/{name}")
            times_path = root / _require(entry, "timestamps", str, f"{where}:{space}/{name}")
            _, fshape = _check_tensor(tensor_path, where)
            _, tshape = _check_tensor(times_path, where)
            if len(tshape) != 1:
                raise ManifestError(
                    f"{where}: timestamps for {space!r}/{name!r} must be 1-d"
                )
            if fshape[0] != tshape[0]:
                raise ManifestError(
                    f"{where}: {space!r}/{name!r}: {fshape[0]} feature rows but "
                    f"{tshape[0]} timestamps"
                )
            times = read_tensor(times_path)
            if times.size > 1 and not np.all(np.diff(times) > 0):
                raise ManifestError(
                    f"{where}: timestamps for {space!r}/{name!r} are not strictly increasing"
                )
            refs[name] = FeatureSeriesRef(tensor=tensor_path, timestamps=times_path)
        feature_spaces[space] = refs

    return DatasetManifest(
        subject_id=subject_id,
        tr_seconds=tr_seconds,
        stories=stories,
        feature_spaces=feature_spaces,
        responses=responses,
        test_repeats=test_repeats,
        n_voxels=int(n_voxels),
        root=root,
    )
