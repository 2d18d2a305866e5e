"""Exception types for the extraction pipeline."""


class ExtractorError(Exception):
    """Base class for extraction failures."""


class MediaDecodeError(ExtractorError):
    """The input media could not be opened or decoded."""


class WeightsUnavailableError(ExtractorError):
    """Pretrained model weights were not found where expected."""


class PairingError(ExtractorError):
    """Audio and video artifacts for a clip do not line up."""
