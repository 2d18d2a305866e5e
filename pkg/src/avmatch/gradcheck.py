"""Finite-difference verification suite.

Checks every primitive op and, for each of the seven presets at micro
widths, the full forward + loss composite, all in float64. Dropout is
disabled during checking (its mask is not differentiable state), batchnorm
runs in training mode.
"""

from __future__ import annotations

import numpy as np

from .losses import (
    LossConfig,
    cosine_similarity_matrix,
    infonce_loss,
    intra_modal_structure_loss,
    triplet_loss_mined,
    vmnet_combined_loss,
)
from .model import DualBranchModel, ModelConfig, build_preset
from .tensor import (
    Tensor,
    concat,
    finite_diff_check,
    l2_normalize_rows,
    matmul,
    reduce,
    softmax_rows,
)

PRIMITIVE_TOL = 1e-4
COMPOSITE_TOL = 1e-3


def micro_config(preset: str, seed: int = 0) -> ModelConfig:
    """A reduced-width ModelConfig small enough for coordinate-wise FD."""
    return build_preset(
        preset,
        audio_dim=5,
        video_dim=7,
        embed_dim=6,
        branch_widths=(8, 6),
        encoder_dim=8,
        encoder_layers=1,
        heads=2,
        ff_dim=10,
        lstm_hidden=3,
        dropout=0.0,
        loss=LossConfig(temperature=0.2, margin=0.2, top_q=3, intra_k=2),
        seed=seed,
    )


def _rand(rng, *shape):
    return Tensor(rng.normal(size=shape), requires_grad=True, dtype=np.float64)


def primitive_checks(seed: int = 0) -> dict[str, float]:
    """Max FD relative error for every differentiable primitive."""
    rng = np.random.default_rng(seed)
    checks: dict[str, float] = {}

    a, b = _rand(rng, 3, 4), _rand(rng, 4, 2)
    checks["matmul"] = finite_diff_check(lambda a, b: matmul(a, b).sum(), [a, b])

    x = Tensor(rng.normal(size=(3, 4)) + 0.5, requires_grad=True, dtype=np.float64)
    checks["relu"] = finite_diff_check(lambda x: (x.relu() * x.relu()).sum(), [x])

    x = _rand(rng, 3, 5)
    w = Tensor(rng.normal(size=(3, 5)))
    checks["softmax_rows"] = finite_diff_check(
        lambda x: (softmax_rows(x, 0.5) * w).sum(), [x])

    x = _rand(rng, 4, 6)
    checks["l2_normalize_rows"] = finite_diff_check(
        lambda x: (l2_normalize_rows(x) * Tensor(np.arange(24.0).reshape(4, 6))
                   ).sum(), [x])

    x = _rand(rng, 5, 3)
    for kind in ("mean", "std", "max"):
        checks[f"reduce_{kind}"] = finite_diff_check(
            lambda x, kind=kind: (reduce(x, kind) ** 2).sum(), [x])

    x = _rand(rng, 2, 3)
    y = _rand(rng, 2, 3)
    checks["mul_add"] = finite_diff_check(
        lambda x, y: ((x * y + x) ** 2).sum(), [x, y])
    checks["exp_log"] = finite_diff_check(
        lambda x: ((x * x + 1.0).log().exp()).sum(), [x])
    checks["tanh_sigmoid"] = finite_diff_check(
        lambda x: (x.tanh() * x.sigmoid()).sum(), [x])
    checks["concat_slice"] = finite_diff_check(
        lambda x, y: (concat([x, y], axis=1)[:, 1:4] ** 2).sum(), [x, y])
    checks["batched_matmul"] = finite_diff_check(
        lambda x: (matmul(x.reshape(1, 2, 3),
                          x.reshape(1, 2, 3).swap_last_two())).sum(), [x])
    checks["max_pool"] = finite_diff_check(lambda x: (x.max(axis=0) ** 2).sum(), [x])

    u, v = _rand(rng, 4, 6), _rand(rng, 4, 6)
    checks["infonce"] = finite_diff_check(
        lambda u, v: infonce_loss(cosine_similarity_matrix(u, v), 0.2), [u, v])
    checks["triplet_mined"] = finite_diff_check(
        lambda u, v: triplet_loss_mined(cosine_similarity_matrix(u, v), 0.3, 3),
        [u, v])
    feats = rng.normal(size=(6, 4))
    e = _rand(rng, 6, 5)
    checks["intra_structure"] = finite_diff_check(
        lambda e: intra_modal_structure_loss(feats, e, 3), [e])
    return checks


def composite_check(preset: str, seed: int = 0) -> float:
    """FD error of the full micro model forward + configured loss w.r.t.
    every trainable parameter."""
    cfg = micro_config(preset, seed)
    model = DualBranchModel(cfg, dtype=np.float64)
    rng = np.random.default_rng(seed + 1)
    n, t = 3, 4
    audio = rng.normal(size=(n, t, cfg.audio_dim))
    video = rng.normal(size=(n, t, cfg.video_dim))

    def agg(raw, mode):
        if mode == "mean":
            return raw.mean(axis=1)
        if mode == "mean_std":
            return np.concatenate([raw.mean(axis=1), raw.std(axis=1)], axis=1)
        return raw

    audio_in = agg(audio, cfg.aggregation)
    video_in = agg(video, cfg.aggregation)
    fixed_rng_seed = seed + 2

    params = list(model.parameters().values())

    def f(*_params):
        rng_f = np.random.default_rng(fixed_rng_seed)
        ea = model.branch_forward(Tensor(audio_in), "audio", training=True,
                                  rng=rng_f)
        ev = model.branch_forward(Tensor(video_in), "video", training=True,
                                  rng=rng_f)
        sim = cosine_similarity_matrix(ea, ev)
        if cfg.loss_kind == "infonce":
            return infonce_loss(sim, cfg.loss.temperature, cfg.loss.symmetric)
        return vmnet_combined_loss(sim, audio.mean(axis=1), video.mean(axis=1),
                                   ea, ev, cfg.loss)

    # eps=1e-4: several composite parameters (e.g. biases feeding batchnorm)
    # have exactly-zero analytic gradients, and at eps=1e-5 the central
    # difference's rounding noise is visible against the 1e-8 denominator floor.
    return finite_diff_check(f, params, eps=1e-4)


def run_suite(seed: int = 0) -> dict[str, float]:
    """Every primitive plus every preset composite; returns name -> error."""
    results = primitive_checks(seed)
    from .model import PRESETS

    for preset in PRESETS:
        results[f"composite_{preset}"] = composite_check(preset, seed)
    return results
