"""Training objectives: InfoNCE, mined cross-modal triplet loss, and the
soft intra-modal structure constraint, plus the cosine-similarity primitive
they share.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, ParameterError, ShapeError
from .tensor import Tensor, l2_normalize_rows, matmul


@dataclass
class LossConfig:
    """Hyperparameters shared by the contrastive objectives."""

    temperature: float = 0.07
    symmetric: bool = True
    margin: float = 0.2
    top_q: int = 200
    intra_k: int = 10
    structure_weight: float = 1.0

    def validate(self) -> "LossConfig":
        if self.temperature <= 0:
            raise ParameterError(f"temperature must be > 0, got {self.temperature}")
        if self.margin < 0:
            raise ParameterError(f"margin must be >= 0, got {self.margin}")
        if self.top_q < 1:
            raise ParameterError(f"top_q must be >= 1, got {self.top_q}")
        if self.intra_k < 1:
            raise ParameterError(f"intra_k must be >= 1, got {self.intra_k}")
        return self


@dataclass
class SimilarityMatrix:
    """Cosine similarities; rows index the first modality, columns the second.

    When square and pair-aligned, the diagonal holds positive-pair scores.
    """

    values: Tensor


def _values(sim: SimilarityMatrix | Tensor) -> Tensor:
    return sim.values if isinstance(sim, SimilarityMatrix) else sim


def cosine_similarity_matrix(u: Tensor, v: Tensor) -> SimilarityMatrix:
    """All-pairs cosine similarity with a 1e-12 norm floor."""
    if u.shape[-1] != v.shape[-1]:
        raise ShapeError(
            f"embedding widths disagree: {u.shape} vs {v.shape}"
        )
    un = l2_normalize_rows(u)
    vn = l2_normalize_rows(v)
    return SimilarityMatrix(matmul(un, vn.swap_last_two()))


def infonce_loss(sim: SimilarityMatrix | Tensor, temperature: float = 0.07,
                 symmetric: bool = True) -> Tensor:
    """Mean over rows of -log softmax(sim/t) at the aligned diagonal.

    Symmetric mode averages the row-wise (first->second modality) and
    column-wise losses. Computed in log-sum-exp form with a detached
    row-max shift, exact because softmax is shift invariant.
    """
    s = _values(sim)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ShapeError(f"infonce needs a square matrix, got {s.shape}")
    if temperature <= 0:
        raise ParameterError(f"temperature must be > 0, got {temperature}")

    def directional(logits: Tensor) -> Tensor:
        n = logits.shape[0]
        shift = Tensor(logits.data.max(axis=1, keepdims=True))
        z = (logits - shift) * (1.0 / temperature)
        lse = z.exp().sum(axis=1).log()
        diag = z[np.arange(n), np.arange(n)]
        return (lse - diag).mean()

    loss = directional(s)
    if symmetric:
        loss = (loss + directional(s.swap_last_two())) * 0.5
    return loss


def triplet_loss_mined(sim: SimilarityMatrix | Tensor, margin: float = 0.2,
                       top_q: int = 200) -> Tensor:
    """Hinge loss over the top-q most violated cross-modal negatives.

    Both retrieval directions are mined independently and averaged; top_q is
    clipped to the number of positive violations, with at least one term so
    the loss stays defined (and exactly zero) on violation-free batches.
    """
    s = _values(sim)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ShapeError(f"triplet loss needs a square matrix, got {s.shape}")
    if s.shape[0] < 2:
        raise DegenerateInputError("triplet loss needs a batch of at least 2")
    if top_q < 1:
        raise ParameterError(f"top_q must be >= 1, got {top_q}")
    n = s.shape[0]
    off = ~np.eye(n, dtype=bool)
    rows, cols = np.nonzero(off)

    def directional(mat: Tensor) -> Tensor:
        diag = mat[np.arange(n), np.arange(n)]
        viol = (margin - diag.reshape(n, 1) + mat)[rows, cols].relu()
        n_pos = int((viol.data > 0).sum())
        q = min(top_q, max(n_pos, 1))
        top = np.argsort(viol.data)[::-1][:q]
        return viol[np.ascontiguousarray(top)].mean()

    return (directional(s) + directional(s.swap_last_two())) * 0.5


def _pairwise_distances(x: Tensor) -> Tensor:
    sq = (x * x).sum(axis=1)
    d2 = sq.reshape(-1, 1) + sq.reshape(1, -1) - matmul(x, x.swap_last_two()) * 2.0
    return (d2.relu() + 1e-12).sqrt()


def intra_modal_structure_loss(inputs: Tensor | np.ndarray, embeddings: Tensor,
                               k: int) -> Tensor:
    """Ranking hinge preserving input-space neighbor order in embedding space.

    For each anchor, its k nearest input-space neighbors (Euclidean) define
    ordered pairs (closer j, farther k'); each pair contributes
    max(0, d_emb(anchor, j) - d_emb(anchor, k')). Mean over all pairs.
    Input distances only define the ordering, so no gradient flows to inputs.
    """
    feats = inputs.data if isinstance(inputs, Tensor) else np.asarray(inputs)
    n = feats.shape[0]
    if embeddings.shape[0] != n:
        raise ShapeError(
            f"inputs ({n}) and embeddings ({embeddings.shape[0]}) row counts differ"
        )
    if n <= k:
        raise ParameterError(f"need more than k={k} samples, got {n}")

    flat = feats.reshape(n, -1).astype(np.float64)
    din = np.linalg.norm(flat[:, None, :] - flat[None, :, :], axis=-1)
    np.fill_diagonal(din, np.inf)

    anchors: list[int] = []
    closer: list[int] = []
    farther: list[int] = []
    for i in range(n):
        nbrs = np.argsort(din[i], kind="stable")[:k]
        for a in range(k):
            for b in range(a + 1, k):
                if din[i, nbrs[a]] < din[i, nbrs[b]]:  # strict: ties free
                    anchors.append(i)
                    closer.append(int(nbrs[a]))
                    farther.append(int(nbrs[b]))
    if not anchors:
        return embeddings.sum() * 0.0

    demb = _pairwise_distances(embeddings)
    ai = np.asarray(anchors)
    terms = (demb[ai, np.asarray(closer)] - demb[ai, np.asarray(farther)]).relu()
    return terms.mean()


def vmnet_combined_loss(sim: SimilarityMatrix | Tensor,
                        audio_inputs: Tensor | np.ndarray,
                        video_inputs: Tensor | np.ndarray,
                        audio_embeddings: Tensor,
                        video_embeddings: Tensor,
                        cfg: LossConfig) -> Tensor:
    """Mined triplet term plus equally weighted intra-modal structure terms."""
    cfg.validate()
    loss = triplet_loss_mined(sim, cfg.margin, cfg.top_q)
    if cfg.structure_weight != 0.0:
        struct = intra_modal_structure_loss(audio_inputs, audio_embeddings,
                                            cfg.intra_k) \
            + intra_modal_structure_loss(video_inputs, video_embeddings,
                                         cfg.intra_k)
        loss = loss + struct * cfg.structure_weight
    return loss
