"""Writing extraction results as interchange tensors + manifest fragments."""

import json
from pathlib import Path

from .tensorio import write_tensor


def emit(story, space_prefix, hidden_states, timestamps, out_dir):
    """Write one tensor per layer plus shared timestamps and a fragment.

    The manifest fragment names each layer's feature space as
    `<prefix>.L<layer>` with paths relative to the fragment file, ready to
    merge into a dataset manifest.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    times_rel = f"{space_prefix}_{story}_times.vxt"
    write_tensor(timestamps, out / times_rel)
    fragment = {"feature_spaces": {}}
    for layer in sorted(hidden_states):
        rel = f"{space_prefix}_L{layer:02d}_{story}.vxt"
        write_tensor(hidden_states[layer], out / rel)
        fragment["feature_spaces"][f"{space_prefix}.L{layer}"] = {
            story: {"tensor": rel, "timestamps": times_rel}
        }
    fragment_path = out / f"{space_prefix}_{story}_fragment.json"
    with open(fragment_path, "w") as fh:
        json.dump(fragment, fh, indent=1, sort_keys=True)
    return fragment_path
