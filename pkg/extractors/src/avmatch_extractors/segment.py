"""Media decoding and segmentation into fixed-length clips.

Video is decoded with OpenCV. Because OpenCV exposes no audio demuxer,
each video file is paired with a sidecar waveform (same stem, ``.wav``);
the effective duration is the shorter of the two streams.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np
from scipy.io import wavfile

from .errors import MediaDecodeError


@dataclass
class Clip:
    """One fixed-length segment: raw audio plus one RGB frame per second."""

    index: int
    start_seconds: float
    duration_seconds: float
    sample_rate: int
    audio: np.ndarray                       # mono float32 in [-1, 1]
    frames: list[np.ndarray] = field(default_factory=list)  # RGB uint8


def read_wav(path: str | Path) -> tuple[np.ndarray, int]:
    """Load a waveform as mono float32 in [-1, 1]."""
    try:
        rate, samples = wavfile.read(path)
    except (ValueError, FileNotFoundError, OSError) as exc:
        raise MediaDecodeError(f"cannot read audio {path}: {exc}") from exc
    if samples.ndim == 2:
        samples = samples.mean(axis=1)
    if np.issubdtype(samples.dtype, np.integer):
        samples = samples / float(np.iinfo(samples.dtype).max)
    return samples.astype(np.float32), int(rate)


def _open_video(path: str | Path) -> tuple[cv2.VideoCapture, float, int]:
    cap = cv2.VideoCapture(str(path))
    if not cap.isOpened():
        raise MediaDecodeError(f"cannot open video {path}")
    fps = cap.get(cv2.CAP_PROP_FPS)
    frame_count = int(cap.get(cv2.CAP_PROP_FRAME_COUNT))
    if fps <= 0 or frame_count <= 0:
        cap.release()
        raise MediaDecodeError(
            f"video {path} reports fps={fps}, frames={frame_count}")
    return cap, fps, frame_count


def default_audio_sidecar(video_path: str | Path) -> Path:
    return Path(video_path).with_suffix(".wav")


def segment_media(video_path: str | Path,
                  audio_path: str | Path | None = None,
                  clip_seconds: float = 15.0) -> list[Clip]:
    """Cut the media pair into consecutive non-overlapping clips.

    The trailing remainder shorter than clip_seconds is discarded; inputs
    shorter than one clip yield an empty list with a warning. Frames are
    sampled mid-second (t = start + 0.5, 1.5, ...).
    """
    if clip_seconds <= 0:
        raise ValueError(f"clip_seconds must be positive, got {clip_seconds}")
    audio_path = audio_path or default_audio_sidecar(video_path)
    samples, rate = read_wav(audio_path)
    cap, fps, frame_count = _open_video(video_path)
    try:
        duration = min(len(samples) / rate, frame_count / fps)
        n_clips = int(duration // clip_seconds)
        if n_clips == 0:
            warnings.warn(
                f"{video_path}: {duration:.1f}s is shorter than one "
                f"{clip_seconds:.0f}s clip, nothing extracted", stacklevel=2)
            return []

        clips = []
        for i in range(n_clips):
            start = i * clip_seconds
            lo = int(round(start * rate))
            hi = int(round((start + clip_seconds) * rate))
            frames = []
            for second in range(int(clip_seconds)):
                t = start + second + 0.5
                frame_idx = min(int(round(t * fps)), frame_count - 1)
                cap.set(cv2.CAP_PROP_POS_FRAMES, frame_idx)
                ok, bgr = cap.read()
                if not ok:
                    raise MediaDecodeError(
                        f"{video_path}: failed to decode frame {frame_idx}")
                frames.append(cv2.cvtColor(bgr, cv2.COLOR_BGR2RGB))
            clips.append(Clip(i, start, clip_seconds, rate,
                              samples[lo:hi], frames))
        return clips
    finally:
        cap.release()
