"""Command line: run an extraction job and write interchange files."""

import argparse
import json
import sys

from .audiomodel import extract_audio
from .emit import emit
from .jobs import AudioJob, JobError, load_job
from .textmodel import extract_text


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="vxtract",
        description="Extract model hidden states over a window plan.",
    )
    parser.add_argument("--job", required=True, help="job description JSON")
    args = parser.parse_args(argv)
    try:
        job = load_job(args.job)
        if isinstance(job, AudioJob):
            result = extract_audio(job)
            story = job.waveform.stem
        else:
            result = extract_text(job)
            story = result.story
        fragment = emit(story, job.space_prefix, result.hidden_states, result.timestamps, job.out_dir)
    except FileNotFoundError as exc:
        print(json.dumps({"error": "io", "message": str(exc)}), file=sys.stderr)
        return 2
    except JobError as exc:
        print(json.dumps({"error": "job", "message": str(exc)}), file=sys.stderr)
        return 1
    print(f"wrote {len(result.hidden_states)} layer tensors; fragment {fragment}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
