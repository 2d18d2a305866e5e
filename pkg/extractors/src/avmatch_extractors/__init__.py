"""Feature extraction pipeline for the avmatch engine.

Segments media into fixed-length clips, runs VGGish over the audio and
ResNet-50 over sampled frames, and writes CMF1 feature files plus a TSV
manifest that the engine consumes directly.
"""

from .audio import (
    VGGish,
    extract_audio_features,
    load_vggish,
    log_mel_examples,
)
from .cmf import write_cmf
from .errors import (
    ExtractorError,
    MediaDecodeError,
    PairingError,
    WeightsUnavailableError,
)
from .pipeline import ExtractionJob, build_manifest, extract_job
from .segment import Clip, read_wav, segment_media
from .video import extract_video_features, load_resnet50, preprocess_frame

__version__ = "0.1.0"

__all__ = [
    "Clip",
    "ExtractionJob",
    "ExtractorError",
    "MediaDecodeError",
    "PairingError",
    "VGGish",
    "WeightsUnavailableError",
    "build_manifest",
    "extract_audio_features",
    "extract_job",
    "extract_video_features",
    "load_resnet50",
    "load_vggish",
    "log_mel_examples",
    "preprocess_frame",
    "read_wav",
    "segment_media",
    "write_cmf",
    "__version__",
]
