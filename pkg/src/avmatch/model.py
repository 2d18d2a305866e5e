"""Dual-branch embedding network, feature aggregation modes, and the seven
named experimental configurations (vm-m, vm-r, vm-ms, ivm-m, ivm-ms, livm,
tivm).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import AUDIO_DIM, VIDEO_DIM, ClipPair, FeatureSequence
from .errors import ConfigurationError, DegenerateInputError, ShapeError
from .layers import (
    BatchNorm,
    BiLSTM,
    Linear,
    Module,
    TransformerEncoder,
    param_count,
)
from .losses import LossConfig
from .tensor import Tensor, dropout, l2_normalize_rows

PRESETS = ("VM-M", "VM-R", "VM-MS", "IVM-M", "IVM-MS", "LIVM", "TIVM")

# preset -> (aggregation, encoder, loss_kind)
_PRESET_MAP = {
    "VM-M": ("mean", "none", "triplet_struct"),
    "VM-R": ("raw", "none", "triplet_struct"),
    "VM-MS": ("mean_std", "none", "triplet_struct"),
    "IVM-M": ("mean", "none", "infonce"),
    "IVM-MS": ("mean_std", "none", "infonce"),
    "LIVM": ("raw", "lstm", "infonce"),
    "TIVM": ("raw", "transformer", "infonce"),
}


@dataclass
class ModelConfig:
    preset: str = "TIVM"
    aggregation: str = "raw"
    encoder: str = "transformer"
    loss_kind: str = "infonce"
    loss: LossConfig = field(default_factory=LossConfig)
    dropout: float = 0.1
    bn_momentum: float = 0.1
    audio_dim: int = AUDIO_DIM
    video_dim: int = VIDEO_DIM
    embed_dim: int = 512
    branch_widths: tuple[int, ...] = (2048, 1024)
    encoder_dim: int = 512
    encoder_layers: int = 2
    heads: int = 8
    ff_dim: int = 2048
    lstm_hidden: int = 384
    seed: int = 0

    def branch_input_dim(self, modality: str) -> int:
        base = self.audio_dim if modality == "audio" else self.video_dim
        if self.aggregation == "mean":
            return base
        if self.aggregation == "mean_std":
            return 2 * base
        return base

    def to_json(self) -> str:
        d = asdict(self)
        d["branch_widths"] = list(self.branch_widths)
        return json.dumps(d, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "ModelConfig":
        d = json.loads(text)
        d["loss"] = LossConfig(**d["loss"])
        d["branch_widths"] = tuple(d["branch_widths"])
        return ModelConfig(**d)


def build_preset(name: str, **overrides) -> ModelConfig:
    """ModelConfig for one of the seven named configurations."""
    canonical = name.upper()
    if canonical not in _PRESET_MAP:
        raise ConfigurationError(
            f"unknown preset {name!r}; valid presets: "
            + ", ".join(p.lower() for p in PRESETS)
        )
    aggregation, encoder, loss_kind = _PRESET_MAP[canonical]
    return ModelConfig(preset=canonical, aggregation=aggregation,
                       encoder=encoder, loss_kind=loss_kind, **overrides)


def aggregate_features(seq: FeatureSequence | np.ndarray, mode: str) -> np.ndarray:
    """mean -> (D,), mean_std -> (2D,) as [mean, population std], raw -> (T, D)."""
    values = seq.values if isinstance(seq, FeatureSequence) else np.asarray(seq)
    if values.shape[0] < 1:
        raise DegenerateInputError("cannot aggregate an empty sequence")
    if mode == "mean":
        return values.mean(axis=0)
    if mode == "mean_std":
        if values.shape[0] < 2:
            raise DegenerateInputError("mean_std aggregation needs T >= 2")
        return np.concatenate([values.mean(axis=0), values.std(axis=0)])
    if mode == "raw":
        return values
    raise ConfigurationError(f"unknown aggregation mode {mode!r}")


@dataclass
class EmbeddingBatch:
    """Aligned L2-normalized embeddings; row i of both modalities is clip_ids[i]."""

    audio: Tensor
    video: Tensor
    clip_ids: list[str]


class _Branch(Module):
    """One modality pathway: FC stack, optional temporal encoder, L2 output."""

    def __init__(self, cfg: ModelConfig, modality: str, rng: np.random.Generator,
                 dtype=np.float32):
        self.modality = modality
        self.aggregation = cfg.aggregation
        self.encoder_kind = cfg.encoder
        self.drop_rate = cfg.dropout
        in_dim = cfg.branch_input_dim(modality)

        if cfg.encoder == "none":
            widths = list(cfg.branch_widths) + [cfg.embed_dim]
            self.linears = []
            self.norms = []
            prev = in_dim
            for w in widths:
                self.linears.append(Linear(prev, w, rng, dtype))
                prev = w
            for w in widths[:-1]:
                self.norms.append(BatchNorm(w, cfg.bn_momentum, dtype=dtype))
            self.encoder = None
            self.head = None
        else:
            self.linears = [Linear(in_dim, cfg.encoder_dim, rng, dtype)]
            self.norms = []
            if cfg.encoder == "transformer":
                self.encoder = TransformerEncoder(
                    cfg.encoder_dim, cfg.heads, cfg.ff_dim, cfg.encoder_layers,
                    cfg.dropout, rng, dtype)
                enc_out = cfg.encoder_dim
            else:
                self.encoder = BiLSTM(cfg.encoder_dim, cfg.lstm_hidden,
                                      cfg.encoder_layers, cfg.dropout, rng, dtype)
                enc_out = 2 * cfg.lstm_hidden
            self.head = Linear(enc_out, cfg.embed_dim, rng, dtype)

    def _fc_stack(self, x: Tensor, training: bool,
                  rng: np.random.Generator) -> Tensor:
        for i, lin in enumerate(self.linears):
            x = lin.forward(x)
            if i < len(self.linears) - 1:
                x = self.norms[i].forward(x, training)
                x = dropout(x.relu(), self.drop_rate, training, rng)
        return x

    def forward(self, x: Tensor, training: bool, rng: np.random.Generator) -> Tensor:
        if self.aggregation != "raw":
            out = self._fc_stack(x, training, rng)
        elif self.encoder is None:
            # VM-R: shared weights per timestep, temporal max-pool after embedding
            n, t, d = x.shape
            frames = self._fc_stack(x.reshape(n * t, d), training, rng)
            out = frames.reshape(n, t, -1).max(axis=1)
        else:
            proj = self.linears[0].forward(x)
            encoded = self.encoder.forward(proj, training, rng)
            pooled = encoded.max(axis=1)
            out = dropout(self.head.forward(pooled).relu(),
                          self.drop_rate, training, rng)
        return l2_normalize_rows(out)


class DualBranchModel(Module):
    """Audio and video branches sharing a 512-dim unit-norm embedding space."""

    def __init__(self, cfg: ModelConfig, dtype=np.float32):
        self.cfg = cfg
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 17]))
        self.audio_branch = _Branch(cfg, "audio", rng, dtype)
        self.video_branch = _Branch(cfg, "video", rng, dtype)

    def parameters(self, prefix: str = "") -> dict[str, Tensor]:
        params = {}
        params.update(self.audio_branch.parameters(f"{prefix}audio."))
        params.update(self.video_branch.parameters(f"{prefix}video."))
        return params

    def buffers(self, prefix: str = "") -> dict[str, np.ndarray]:
        bufs = {}
        bufs.update(self.audio_branch.buffers(f"{prefix}audio."))
        bufs.update(self.video_branch.buffers(f"{prefix}video."))
        return bufs

    def branch_forward(self, x: Tensor | np.ndarray, modality: str,
                       training: bool = False,
                       rng: np.random.Generator | None = None) -> Tensor:
        if modality not in ("audio", "video"):
            raise ConfigurationError(f"unknown modality {modality!r}")
        branch = self.audio_branch if modality == "audio" else self.video_branch
        if not isinstance(x, Tensor):
            x = Tensor(x)
        expected = self.cfg.branch_input_dim(modality)
        if x.shape[-1] != expected:
            raise ShapeError(
                f"{modality} branch expects width {expected} "
                f"(aggregation={self.cfg.aggregation}), got {x.shape}"
            )
        if rng is None:
            rng = np.random.default_rng(0)
        return branch.forward(x, training, rng)

    def embed_pair_batch(self, pairs: list[ClipPair], training: bool = False,
                         rng: np.random.Generator | None = None) -> EmbeddingBatch:
        if not pairs:
            raise ShapeError("cannot embed an empty batch")
        t0 = pairs[0].audio.T
        da, dv = pairs[0].audio.D, pairs[0].video.D
        for p in pairs:
            if p.audio.T != t0 or p.video.T != t0 or p.audio.D != da \
                    or p.video.D != dv:
                raise ShapeError(f"ragged batch at clip {p.clip_id}")
        mode = self.cfg.aggregation
        audio_in = np.stack([aggregate_features(p.audio, mode) for p in pairs])
        video_in = np.stack([aggregate_features(p.video, mode) for p in pairs])
        if rng is None:
            rng = np.random.default_rng(0)
        dtype = next(iter(self.parameters().values())).dtype
        audio = self.branch_forward(Tensor(audio_in.astype(dtype)), "audio",
                                    training, rng)
        video = self.branch_forward(Tensor(video_in.astype(dtype)), "video",
                                    training, rng)
        return EmbeddingBatch(audio, video, [p.clip_id for p in pairs])

    def aggregated_inputs(self, pairs: list[ClipPair]) -> tuple[np.ndarray, np.ndarray]:
        """Time-mean input features, the structure loss's neighbor space."""
        a = np.stack([aggregate_features(p.audio, "mean") for p in pairs])
        v = np.stack([aggregate_features(p.video, "mean") for p in pairs])
        return a, v

    def param_count(self) -> int:
        return param_count(self)
