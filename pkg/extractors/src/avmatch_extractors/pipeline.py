"""End-to-end extraction: media pair -> CMF1 files -> TSV manifest."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .audio import extract_audio_features
from .cmf import write_cmf
from .errors import PairingError
from .segment import segment_media


@dataclass
class ExtractionJob:
    """One source media file to segment and featurize.

    song_id defaults to the video file's stem so that all clips cut from
    one source share it, which is what the engine's song-disjoint splitter
    keys on.
    """

    video_path: Path
    audio_path: Path | None = None
    clip_seconds: float = 15.0
    song_id: str | None = None

    def __post_init__(self) -> None:
        if self.clip_seconds <= 0:
            raise ValueError(
                f"clip_seconds must be positive, got {self.clip_seconds}")
        if self.song_id is None:
            self.song_id = Path(self.video_path).stem


def extract_job(job: ExtractionJob, out_dir: str | Path,
                audio_model, video_model) -> list[str]:
    """Run one job; returns the clip ids written."""
    from .video import extract_video_features

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    clip_ids = []
    frames = int(job.clip_seconds)
    for clip in segment_media(job.video_path, job.audio_path,
                              job.clip_seconds):
        clip_id = f"{job.song_id}_clip{clip.index:02d}"
        audio = extract_audio_features(clip.audio, clip.sample_rate,
                                       audio_model, frames=frames)
        video = extract_video_features(clip.frames, video_model,
                                       frames=frames)
        write_cmf(audio, "audio", out / f"{clip_id}.audio.cmf")
        write_cmf(video, "video", out / f"{clip_id}.video.cmf")
        clip_ids.append(clip_id)
    return clip_ids


def build_manifest(out_dir: str | Path,
                   song_of: dict[str, str] | None = None) -> Path:
    """Scan a directory of CMF1 files and write the engine's TSV manifest.

    Every clip must have both modalities; orphans are an error listing the
    offending clip ids. song_id defaults to the clip id with its trailing
    ``_clipNN`` suffix removed.
    """
    out = Path(out_dir)
    audio = {p.name[:-len(".audio.cmf")] for p in out.glob("*.audio.cmf")}
    video = {p.name[:-len(".video.cmf")] for p in out.glob("*.video.cmf")}
    orphans = sorted(audio ^ video)
    if orphans:
        raise PairingError(
            f"clips missing one modality: {', '.join(orphans)}")

    lines = []
    for clip_id in sorted(audio):
        if song_of and clip_id in song_of:
            song = song_of[clip_id]
        else:
            song = clip_id.rsplit("_clip", 1)[0]
        lines.append(f"{clip_id}\t{song}\t{clip_id}.audio.cmf\t"
                     f"{clip_id}.video.cmf")
    manifest = out / "manifest.tsv"
    manifest.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return manifest
