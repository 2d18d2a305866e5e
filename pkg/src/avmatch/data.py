"""Feature-file and manifest I/O, song-disjoint splitting, batching, and the
synthetic paired-sequence generator.

File contracts (shared with the external feature extractor):

* CMF1 feature file: magic ``CMF1``, version u16 LE (=1), modality u8
  (0 audio, 1 video), T u32 LE, D u32 LE, then T*D float32 LE row-major.
* Manifest: UTF-8 TSV, one record per line with fields
  clip_id, song_id, audio_path, video_path; ``#`` lines are comments.
"""

from __future__ import annotations

import math
import struct
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    ConfigurationError,
    CorruptionError,
    FormatError,
    ManifestError,
    ParameterError,
)

CMF1_MAGIC = b"CMF1"
CMF1_VERSION = 1
_MODALITY_CODE = {"audio": 0, "video": 1}
_MODALITY_NAME = {0: "audio", 1: "video"}

AUDIO_DIM = 128
VIDEO_DIM = 1000
DEFAULT_FRAMES = 15


@dataclass
class FeatureSequence:
    """Per-frame features for one clip and one modality, shape (T, D)."""

    clip_id: str
    modality: str
    values: np.ndarray

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float32)
        if self.values.ndim != 2:
            raise ParameterError(
                f"feature sequence must be 2-D, got shape {self.values.shape}"
            )
        if self.modality not in _MODALITY_CODE:
            raise ParameterError(f"unknown modality {self.modality!r}")

    @property
    def T(self) -> int:
        return self.values.shape[0]

    @property
    def D(self) -> int:
        return self.values.shape[1]


@dataclass
class ClipPair:
    """Matched audio and video sequences for one clip."""

    clip_id: str
    song_id: str
    audio: FeatureSequence
    video: FeatureSequence


@dataclass
class ManifestRecord:
    clip_id: str
    song_id: str
    audio_path: str
    video_path: str


@dataclass
class DatasetSplit:
    train: list[ClipPair]
    val: list[ClipPair]
    test: list[ClipPair]
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)

    def song_sets(self) -> tuple[set, set, set]:
        return tuple({p.song_id for p in part}
                     for part in (self.train, self.val, self.test))


# -- CMF1 feature files --------------------------------------------------------


def write_feature_file(seq: FeatureSequence, path: str | Path) -> None:
    payload = seq.values.astype("<f4").tobytes()
    header = CMF1_MAGIC + struct.pack(
        "<HBII", CMF1_VERSION, _MODALITY_CODE[seq.modality], seq.T, seq.D
    )
    Path(path).write_bytes(header + payload)


def read_feature_file(path: str | Path) -> FeatureSequence:
    raw = Path(path).read_bytes()
    if len(raw) < 15:
        raise FormatError(f"{path}: too short to hold a CMF1 header")
    if raw[:4] != CMF1_MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:4]!r}, expected {CMF1_MAGIC!r}")
    version, modality_code, t, d = struct.unpack("<HBII", raw[4:15])
    if version != CMF1_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if modality_code not in _MODALITY_NAME:
        raise FormatError(f"{path}: unknown modality code {modality_code}")
    expected = t * d * 4
    actual = len(raw) - 15
    if actual != expected:
        raise CorruptionError(
            f"{path}: payload is {actual} bytes, expected {expected} "
            f"for shape ({t}, {d})"
        )
    values = np.frombuffer(raw, dtype="<f4", offset=15).reshape(t, d)
    return FeatureSequence(Path(path).stem, _MODALITY_NAME[modality_code],
                           values.copy())


# -- manifests -------------------------------------------------------------------


def write_manifest(records: list[ManifestRecord], path: str | Path) -> None:
    lines = ["# clip_id\tsong_id\taudio_path\tvideo_path"]
    for r in records:
        lines.append(f"{r.clip_id}\t{r.song_id}\t{r.audio_path}\t{r.video_path}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_manifest(path: str | Path) -> list[ManifestRecord]:
    records = []
    for lineno, line in enumerate(
        Path(path).read_text(encoding="utf-8").splitlines(), start=1
    ):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 4:
            raise ManifestError(f"{path}:{lineno}: expected 4 fields, got {len(fields)}")
        records.append(ManifestRecord(*fields))
    seen = Counter(r.clip_id for r in records)
    dupes = [cid for cid, n in seen.items() if n > 1]
    if dupes:
        raise ManifestError(f"{path}: duplicate clip_ids {dupes}")
    return records


def load_pairs(manifest_path: str | Path) -> list[ClipPair]:
    """Read a manifest and every feature file it references."""
    base = Path(manifest_path).parent
    pairs = []
    for rec in read_manifest(manifest_path):
        apath = (base / rec.audio_path) if not Path(rec.audio_path).is_absolute() \
            else Path(rec.audio_path)
        vpath = (base / rec.video_path) if not Path(rec.video_path).is_absolute() \
            else Path(rec.video_path)
        for p in (apath, vpath):
            if not p.exists():
                raise ManifestError(f"{manifest_path}: missing feature file {p}")
        audio = read_feature_file(apath)
        video = read_feature_file(vpath)
        audio.clip_id = video.clip_id = rec.clip_id
        if audio.T != video.T:
            raise ManifestError(
                f"{rec.clip_id}: audio T={audio.T} != video T={video.T}"
            )
        pairs.append(ClipPair(rec.clip_id, rec.song_id, audio, video))
    return pairs


# -- splitting and batching -----------------------------------------------------


def split_by_song(pairs: list[ClipPair],
                  ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
                  seed: int = 0) -> DatasetSplit:
    """Song-disjoint split, greedily matching pair-count ratios.

    Songs are shuffled by seed, then each song goes to the split with the
    largest remaining pair-count deficit (ties favor train, then val).
    """
    songs: dict[str, list[ClipPair]] = {}
    for p in pairs:
        songs.setdefault(p.song_id, []).append(p)
    if len(songs) < 3:
        raise ConfigurationError(
            f"song-disjoint split needs >= 3 songs, got {len(songs)}"
        )
    if not math.isclose(sum(ratios), 1.0, abs_tol=1e-6):
        raise ConfigurationError(f"ratios must sum to 1, got {ratios}")

    rng = np.random.default_rng(seed)
    order = sorted(songs)
    rng.shuffle(order)

    total = len(pairs)
    targets = [r * total for r in ratios]
    assigned: list[list[ClipPair]] = [[], [], []]
    counts = [0, 0, 0]
    for song in order:
        deficits = [targets[i] - counts[i] for i in range(3)]
        best = max(range(3), key=lambda i: (deficits[i], -i))
        assigned[best].extend(songs[song])
        counts[best] += len(songs[song])
    return DatasetSplit(assigned[0], assigned[1], assigned[2], tuple(ratios))


def make_batches(pairs: list[ClipPair], batch_size: int, seed: int = 0,
                 drop_last: bool = True) -> list[list[ClipPair]]:
    """Seeded shuffle into fixed-size batches with distinct clip_ids."""
    if batch_size < 2:
        raise ConfigurationError(
            f"contrastive batches need batch_size >= 2, got {batch_size}"
        )
    ids = [p.clip_id for p in pairs]
    if len(set(ids)) != len(ids):
        raise ConfigurationError("duplicate clip_ids in batch source")
    rng = np.random.default_rng(seed)
    order = np.arange(len(pairs))
    rng.shuffle(order)
    shuffled = [pairs[i] for i in order]
    batches = []
    for start in range(0, len(shuffled), batch_size):
        chunk = shuffled[start:start + batch_size]
        if len(chunk) < batch_size and drop_last:
            break
        batches.append(chunk)
    return batches


# -- synthetic generator ----------------------------------------------------------


@dataclass
class SynthConfig:
    n_songs: int = 40
    clips_per_song: int = 8
    frames: int = DEFAULT_FRAMES
    vocab: int = 8
    d_audio: int = AUDIO_DIM
    d_video: int = VIDEO_DIM
    noise: float = 0.1
    order_critical: bool = True
    seed: int = 0


def _distinct_permutation_count(multiset: np.ndarray) -> int:
    counts = Counter(multiset.tolist())
    total = math.factorial(len(multiset))
    for c in counts.values():
        total //= math.factorial(c)
    return total


def synth_generate(cfg: SynthConfig) -> list[ClipPair]:
    """Event-driven paired sequences: matched modalities share an event
    sequence rendered through fixed per-dataset mixing maps plus noise.

    With order_critical=True every clip of a song permutes one shared event
    multiset, so time-mean features are uninformative within a song.
    """
    if cfg.vocab < 2:
        raise ParameterError(f"vocab must be >= 2, got {cfg.vocab}")
    if cfg.frames < 2:
        raise ParameterError(f"frames must be >= 2, got {cfg.frames}")
    rng = np.random.default_rng(cfg.seed)
    w_audio = rng.normal(0.0, 1.0, size=(cfg.d_audio, cfg.vocab)).astype(np.float32)
    w_video = rng.normal(0.0, 1.0, size=(cfg.d_video, cfg.vocab)).astype(np.float32)

    pairs: list[ClipPair] = []
    for s in range(cfg.n_songs):
        song_id = f"song{s:03d}"
        if cfg.order_critical:
            base = rng.integers(0, cfg.vocab, size=cfg.frames)
            limit = _distinct_permutation_count(base)
            if cfg.clips_per_song > limit:
                raise ConfigurationError(
                    f"{song_id}: {cfg.clips_per_song} clips requested but the "
                    f"event multiset has only {limit} distinct permutations"
                )
            seen: set[tuple] = set()
            events = []
            while len(events) < cfg.clips_per_song:
                perm = rng.permutation(base)
                key = tuple(perm.tolist())
                if key not in seen:
                    seen.add(key)
                    events.append(perm)
        else:
            events = [rng.integers(0, cfg.vocab, size=cfg.frames)
                      for _ in range(cfg.clips_per_song)]

        for c, ev in enumerate(events):
            clip_id = f"{song_id}_clip{c:02d}"
            a = w_audio[:, ev].T.copy()
            v = w_video[:, ev].T.copy()
            if cfg.noise > 0:
                a += cfg.noise * rng.normal(size=a.shape).astype(np.float32)
                v += cfg.noise * rng.normal(size=v.shape).astype(np.float32)
            pairs.append(ClipPair(
                clip_id, song_id,
                FeatureSequence(clip_id, "audio", a),
                FeatureSequence(clip_id, "video", v),
            ))
    return pairs


def save_dataset(pairs: list[ClipPair], out_dir: str | Path) -> Path:
    """Write CMF1 files plus a manifest; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = []
    for p in pairs:
        apath = f"{p.clip_id}.audio.cmf"
        vpath = f"{p.clip_id}.video.cmf"
        write_feature_file(p.audio, out / apath)
        write_feature_file(p.video, out / vpath)
        records.append(ManifestRecord(p.clip_id, p.song_id, apath, vpath))
    manifest = out / "manifest.tsv"
    write_manifest(records, manifest)
    return manifest
