"""Exception types shared across the package."""


class StructuralError(ValueError):
    """Shape/type/contract violation: mismatched dimensions, singular matrices,
    non-scalar backward roots, malformed configs."""


class DegenerateInputError(ValueError):
    """Input is valid in shape but carries no usable signal (all-black image,
    all-zero ground truth, singleton batch statistics)."""


class CheckpointError(IOError):
    """Missing, truncated, or version-incompatible checkpoint file."""


class OptimizerAbort(RuntimeError):
    """A training step produced a non-finite gradient or parameter; carries
    the offending parameter name for diagnostics."""


class ConfigError(ValueError):
    """Invalid run configuration; message lists every problem found."""


class SkipSample(Exception):
    """Raised by augmentation when an image cannot yield a valid patch; the
    training loop logs a warning and moves on."""
