"""Exception types shared across the package."""


class AvMatchError(Exception):
    """Base class for all package errors."""


class ShapeError(AvMatchError):
    """Tensor shapes are incompatible with the requested operation."""


class ParameterError(AvMatchError):
    """A hyperparameter or argument is outside its valid range."""


class DegenerateInputError(AvMatchError):
    """Input is structurally valid but statistically degenerate (e.g. std of one row)."""


class ConfigurationError(AvMatchError):
    """Invalid preset, split, or run configuration."""


class FormatError(AvMatchError):
    """A file does not match the expected magic/version layout."""


class CorruptionError(AvMatchError):
    """A file parsed its header but the payload is inconsistent."""


class ManifestError(AvMatchError):
    """A dataset manifest is malformed or references missing files."""


class TrainingError(AvMatchError):
    """Optimizer or training-loop failure (missing grads, divergence)."""
