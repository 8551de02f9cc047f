"""Job descriptions, transcripts, and window-plan documents.

A job names the checkpoint, the layers to dump, the stimulus (transcript
with word timings, or a waveform), the window plan produced by the
pipeline's planner, and where to put the outputs.
"""

import json
from dataclasses import dataclass
from pathlib import Path


class JobError(ValueError):
    pass


@dataclass
class WordTiming:
    word: str
    start: float
    end: float


@dataclass
class TextJob:
    model_dir: Path
    layers: list
    transcript: Path
    plan: Path
    out_dir: Path
    space_prefix: str
    word_pooling: str = "last"  # or "mean"

    def __post_init__(self):
        if self.word_pooling not in ("last", "mean"):
            raise JobError(f"unknown word_pooling {self.word_pooling!r}")


@dataclass
class AudioJob:
    model_dir: Path
    layers: list
    waveform: Path
    plan: Path
    out_dir: Path
    space_prefix: str
    sample_rate: int = 16000
    component: str = "encoder"


def load_job(path):
    path = Path(path)
    with open(path) as fh:
        doc = json.load(fh)
    kind = doc.pop("kind", None)
    root = path.parent

    def resolve(key):
        if key not in doc:
            raise JobError(f"{path}: missing field {key!r}")
        return root / doc.pop(key)

    common = dict(
        model_dir=resolve("model_dir"),
        layers=[int(x) for x in doc.pop("layers")],
        plan=resolve("plan"),
        out_dir=resolve("out_dir"),
        space_prefix=doc.pop("space_prefix"),
    )
    if kind == "text":
        job = TextJob(transcript=resolve("transcript"), **common, **doc)
    elif kind == "audio":
        job = AudioJob(waveform=resolve("waveform"), **common, **doc)
    else:
        raise JobError(f"{path}: kind must be 'text' or 'audio', got {kind!r}")
    return job


def load_transcript(path):
    """Transcript document: {"story": name, "words": [{word,start,end}...]}."""
    with open(path) as fh:
        doc = json.load(fh)
    words = [WordTiming(w["word"], float(w["start"]), float(w["end"])) for w in doc["words"]]
    if not words:
        raise JobError(f"{path}: transcript has no words")
    for a, b in zip(words, words[1:]):
        if b.end < a.end:
            raise JobError(f"{path}: word end times must be non-decreasing")
    return doc["story"], words


def load_token_plan(path):
    """Token windows [(start, end), ...] from a planner document."""
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("kind") != "tokens":
        raise JobError(f"{path}: expected a token plan")
    windows = [(int(w["start"]), int(w["end"])) for w in doc["windows"]]
    for i, (_, end) in enumerate(windows, start=1):
        if end != i:
            raise JobError(f"{path}: window {i} targets token {end}")
    return windows


def load_audio_plan(path):
    """Audio windows [(t_start, t_end), ...] from a planner document."""
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("kind") != "audio":
        raise JobError(f"{path}: expected an audio plan")
    return [(float(w["start"]), float(w["end"])) for w in doc["windows"]]
