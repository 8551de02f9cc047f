"""Exception types shared across the pipeline."""


class VoxencError(Exception):
    """Base class for all toolkit errors."""


class TensorFormatError(VoxencError):
    """A tensor file could not be written or parsed."""


class ManifestError(VoxencError):
    """A dataset manifest is missing, malformed, or inconsistent."""


class ValidationError(VoxencError):
    """Inputs violate an operation's preconditions."""
