"""Voxelwise encoding-model toolkit.

Fits and evaluates per-voxel linear models that predict brain responses
from stimulus features: temporal alignment of irregularly sampled
features onto the scan grid, ridge regression with per-voxel
regularization, convex stacking of multiple feature spaces, noise-ceiling
estimation from repeated trials, and log-linear scaling fits. A built-in
simulator generates datasets with known structure for verification.
"""

__version__ = "0.1.0"

from .tensorfile import read_tensor, read_tensor_header, write_tensor
from .manifest import DatasetManifest, StoryEntry, load_manifest

__all__ = [
    "DatasetManifest",
    "StoryEntry",
    "load_manifest",
    "read_tensor",
    "read_tensor_header",
    "write_tensor",
    "__version__",
]
