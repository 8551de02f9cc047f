"""Hidden-state extraction adapter.

Runs pretrained causal language models and audio encoder models over
window-plan documents and emits interchange tensors plus manifest
fragments for the encoding-model pipeline. The adapter talks to the
pipeline only through its file formats; it shares no code with it.
"""

__version__ = "0.1.0"

from .jobs import AudioJob, TextJob, load_job
from .tensorio import read_tensor, write_tensor

__all__ = ["AudioJob", "TextJob", "load_job", "read_tensor", "write_tensor", "__version__"]
