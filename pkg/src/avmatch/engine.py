"""Training loop with Adam, checkpointing, top-k recall evaluation, the
analytic random baseline, and recommendation queries.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .data import ClipPair, DatasetSplit, FeatureSequence, make_batches
from .errors import (
    ConfigurationError,
    CorruptionError,
    FormatError,
    ParameterError,
    TrainingError,
)
from .losses import (
    cosine_similarity_matrix,
    infonce_loss,
    vmnet_combined_loss,
)
from .model import DualBranchModel, EmbeddingBatch, ModelConfig, aggregate_features
from .tensor import Tensor, concat

CHECKPOINT_MAGIC = b"CMCK"
CHECKPOINT_VERSION = 1
DEFAULT_KS = (1, 5, 10, 25, 50)


# -- optimizer ------------------------------------------------------------------


@dataclass
class TrainerState:
    """Adam moments plus loop bookkeeping."""

    step: int = 0
    epoch: int = 0
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    best_val_recall: float = -1.0


def adam_step(state: TrainerState, params: dict[str, Tensor]) -> None:
    """One bias-corrected Adam update, reading grads off the parameters."""
    state.step += 1
    t = state.step
    for name, p in params.items():
        if p.grad is None:
            raise TrainingError(f"parameter {name!r} has no gradient")
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        g = p.grad
        state.m[name] = state.beta1 * state.m[name] + (1 - state.beta1) * g
        state.v[name] = state.beta2 * state.v[name] + (1 - state.beta2) * (g * g)
        mhat = state.m[name] / (1 - state.beta1**t)
        vhat = state.v[name] / (1 - state.beta2**t)
        p.data = p.data - state.lr * mhat / (np.sqrt(vhat) + state.eps)


# -- loss dispatch -----------------------------------------------------------------


def batch_loss(model: DualBranchModel, batch: list[ClipPair],
               rng: np.random.Generator, training: bool = True) -> Tensor:
    """Forward one batch through both branches and the configured objective."""
    emb = model.embed_pair_batch(batch, training=training, rng=rng)
    sim = cosine_similarity_matrix(emb.audio, emb.video)
    cfg = model.cfg
    if cfg.loss_kind == "infonce":
        return infonce_loss(sim, cfg.loss.temperature, cfg.loss.symmetric)
    audio_in, video_in = model.aggregated_inputs(batch)
    return vmnet_combined_loss(sim, audio_in, video_in, emb.audio, emb.video,
                               cfg.loss)


# -- evaluation ---------------------------------------------------------------------


@dataclass
class RecallReport:
    ks: tuple[int, ...]
    recalls: dict[int, float]
    random_baseline: dict[int, float]
    n_candidates: int
    direction: str

    def as_dict(self) -> dict:
        return {
            "direction": self.direction,
            "n_candidates": self.n_candidates,
            "recall": {str(k): self.recalls[k] for k in self.ks},
            "random_baseline": {str(k): self.random_baseline[k] for k in self.ks},
        }


def random_baseline(k: int, n: int) -> float:
    """Probability the positive lands in a uniformly random top-k: k/n."""
    if not 1 <= k <= n:
        raise ParameterError(f"need 1 <= k <= n, got k={k}, n={n}")
    return k / n


def evaluate_topk_recall(embeddings: EmbeddingBatch,
                         ks: tuple[int, ...] = DEFAULT_KS,
                         direction: str = "video->audio") -> RecallReport:
    """Rank all candidates per query by cosine similarity; ties break by
    ascending candidate index (stable sort on descending similarity)."""
    if direction == "video->audio":
        queries, candidates = embeddings.video.data, embeddings.audio.data
    elif direction == "audio->video":
        queries, candidates = embeddings.audio.data, embeddings.video.data
    else:
        raise ParameterError(f"unknown direction {direction!r}")
    n = queries.shape[0]
    ks = tuple(sorted(ks))
    for k in ks:
        if k > n:
            raise ParameterError(f"k={k} exceeds candidate count {n}")
    sim = queries @ candidates.T
    order = np.argsort(-sim, axis=1, kind="stable")
    positive_rank = np.argmax(order == np.arange(n)[:, None], axis=1)
    recalls = {k: float((positive_rank < k).mean()) for k in ks}
    baseline = {k: random_baseline(k, n) for k in ks}
    return RecallReport(ks, recalls, baseline, n, direction)


def embed_pairs(model: DualBranchModel, pairs: list[ClipPair],
                chunk: int = 256) -> EmbeddingBatch:
    """Eval-mode embeddings for an arbitrarily large pair list."""
    audio_parts, video_parts, ids = [], [], []
    for start in range(0, len(pairs), chunk):
        part = pairs[start:start + chunk]
        emb = model.embed_pair_batch(part, training=False)
        audio_parts.append(emb.audio.detach())
        video_parts.append(emb.video.detach())
        ids.extend(emb.clip_ids)
    return EmbeddingBatch(concat(audio_parts, axis=0),
                          concat(video_parts, axis=0), ids)


# -- checkpoints -----------------------------------------------------------------


def _named_tensors(model: DualBranchModel) -> dict[str, np.ndarray]:
    named = {name: p.data for name, p in model.parameters().items()}
    for name, buf in model.buffers().items():
        named[f"buffer:{name}"] = buf
    return named


def save_checkpoint(model: DualBranchModel, path: str | Path) -> None:
    config_blob = model.cfg.to_json().encode("utf-8")
    out = [CHECKPOINT_MAGIC, struct.pack("<H", CHECKPOINT_VERSION),
           struct.pack("<I", len(config_blob)), config_blob]
    named = _named_tensors(model)
    out.append(struct.pack("<I", len(named)))
    for name in sorted(named):
        arr = np.ascontiguousarray(named[name], dtype="<f4")
        nb = name.encode("utf-8")
        out.append(struct.pack("<H", len(nb)))
        out.append(nb)
        out.append(struct.pack("<B", arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(arr.tobytes())
    Path(path).write_bytes(b"".join(out))


class _Reader:
    def __init__(self, raw: bytes, path):
        self.raw = raw
        self.off = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.off + n > len(self.raw):
            raise CorruptionError(
                f"{self.path}: truncated at byte {self.off}, needed {n} more"
            )
        chunk = self.raw[self.off:self.off + n]
        self.off += n
        return chunk


def load_checkpoint(path: str | Path) -> DualBranchModel:
    r = _Reader(Path(path).read_bytes(), path)
    if r.take(4) != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: not a checkpoint (bad magic)")
    (version,) = struct.unpack("<H", r.take(2))
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    (cfg_len,) = struct.unpack("<I", r.take(4))
    cfg = ModelConfig.from_json(r.take(cfg_len).decode("utf-8"))
    (count,) = struct.unpack("<I", r.take(4))
    named: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", r.take(2))
        name = r.take(name_len).decode("utf-8")
        (rank,) = struct.unpack("<B", r.take(1))
        dims = struct.unpack(f"<{rank}I", r.take(4 * rank))
        payload = r.take(4 * int(np.prod(dims)) if rank else 4)
        named[name] = np.frombuffer(payload, dtype="<f4").reshape(dims).copy()
    if r.off != len(r.raw):
        raise CorruptionError(f"{path}: {len(r.raw) - r.off} trailing bytes")

    model = DualBranchModel(cfg)
    expected = _named_tensors(model)
    if set(expected) != set(named):
        missing = sorted(set(expected) - set(named))
        extra = sorted(set(named) - set(expected))
        raise CorruptionError(
            f"{path}: tensor set mismatch (missing {missing}, extra {extra})"
        )
    params = model.parameters()
    for name, arr in named.items():
        if arr.shape != expected[name].shape:
            raise CorruptionError(
                f"{path}: tensor {name} has shape {arr.shape}, "
                f"expected {expected[name].shape}"
            )
        if name.startswith("buffer:"):
            expected[name][...] = arr
        else:
            params[name].data = arr
    return model


def restore_state(model: DualBranchModel,
                  snapshot: dict[str, np.ndarray]) -> None:
    named = _named_tensors(model)
    params = model.parameters()
    for name, arr in snapshot.items():
        if name.startswith("buffer:"):
            named[name][...] = arr
        else:
            params[name].data = arr.copy()


def snapshot_state(model: DualBranchModel) -> dict[str, np.ndarray]:
    return {name: arr.copy() for name, arr in _named_tensors(model).items()}


# -- training loop ----------------------------------------------------------------


def train(config: ModelConfig, split: DatasetSplit, epochs: int,
          batch_size: int = 128, seed: int = 0, lr: float = 1e-4,
          eval_every: int = 1,
          callback: Callable[[dict], bool] | None = None,
          ) -> tuple[DualBranchModel, list[dict]]:
    """Train a preset on a song-disjoint split.

    Returns the model restored to its best-validation-recall@10 state plus
    the per-epoch metrics log. Deterministic for a fixed seed. The optional
    callback sees each epoch's metrics row and may return True to stop early.
    """
    if not split.train:
        raise ConfigurationError("training split is empty")
    if batch_size < 2:
        raise ConfigurationError(f"batch_size must be >= 2, got {batch_size}")
    batch_size = min(batch_size, len(split.train))

    config.seed = seed
    model = DualBranchModel(config)
    state = TrainerState(lr=lr)
    drop_rng = np.random.default_rng(np.random.SeedSequence([seed, 977]))
    params = model.parameters()
    metrics: list[dict] = []
    best = snapshot_state(model)
    state.best_val_recall = _val_recall(model, split) if split.val else -1.0

    for epoch in range(epochs):
        state.epoch = epoch
        batches = make_batches(split.train, batch_size,
                               seed=seed * 1_000_003 + epoch, drop_last=True)
        if not batches:
            raise ConfigurationError(
                f"batch_size {batch_size} exceeds train split size "
                f"{len(split.train)}"
            )
        losses = []
        for batch in batches:
            for p in params.values():
                p.zero_grad()
            loss = batch_loss(model, batch, drop_rng, training=True)
            value = loss.item()
            if not math.isfinite(value):
                raise TrainingError(
                    f"non-finite loss {value} at step {state.step + 1}"
                )
            loss.backward()
            adam_step(state, params)
            losses.append(value)

        row = {"epoch": epoch, "train_loss": float(np.mean(losses))}
        if split.val and (epoch + 1) % eval_every == 0:
            recall10 = _val_recall(model, split)
            row["val_recall@10"] = recall10
            if recall10 > state.best_val_recall:
                state.best_val_recall = recall10
                best = snapshot_state(model)
        metrics.append(row)
        if callback is not None and callback(row):
            break

    if split.val:
        final = _val_recall(model, split)
        if final > state.best_val_recall:
            state.best_val_recall = final
            best = snapshot_state(model)
        restore_state(model, best)
    return model, metrics


def _val_recall(model: DualBranchModel, split: DatasetSplit) -> float:
    emb = embed_pairs(model, split.val)
    k = min(10, len(split.val))
    report = evaluate_topk_recall(emb, ks=(k,), direction="video->audio")
    return report.recalls[k]


# -- recommendation -----------------------------------------------------------------


def recommend(model: DualBranchModel, query: FeatureSequence,
              candidates: list[FeatureSequence], top_k: int,
              ) -> list[tuple[str, float]]:
    """Rank candidate clips against a query from the opposite modality."""
    if top_k < 1 or top_k > len(candidates):
        raise ParameterError(
            f"top_k must be in [1, {len(candidates)}], got {top_k}"
        )
    cfg = model.cfg
    expected_q = cfg.audio_dim if query.modality == "audio" else cfg.video_dim
    if query.D != expected_q:
        raise ConfigurationError(
            f"query width {query.D} does not match checkpoint "
            f"{query.modality} width {expected_q}"
        )
    cand_modality = "audio" if query.modality == "video" else "video"
    expected_c = cfg.audio_dim if cand_modality == "audio" else cfg.video_dim
    for c in candidates:
        if c.modality != cand_modality or c.D != expected_c:
            raise ConfigurationError(
                f"candidate {c.clip_id} has modality {c.modality}/width {c.D}, "
                f"expected {cand_modality}/{expected_c}"
            )

    mode = cfg.aggregation
    q_in = np.stack([aggregate_features(query, mode)])
    c_in = np.stack([aggregate_features(c, mode) for c in candidates])
    q_emb = model.branch_forward(q_in, query.modality, training=False)
    c_emb = model.branch_forward(c_in, cand_modality, training=False)
    sims = (q_emb.data @ c_emb.data.T)[0]
    order = np.argsort(-sims, kind="stable")[:top_k]
    return [(candidates[i].clip_id, float(sims[i])) for i in order]
