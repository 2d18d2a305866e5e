"""Loss semantics against hand values, brute-force oracles, and invariants."""

import numpy as np
import pytest

from avmatch.errors import DegenerateInputError, ParameterError, ShapeError
from avmatch.losses import (
    LossConfig,
    SimilarityMatrix,
    cosine_similarity_matrix,
    infonce_loss,
    intra_modal_structure_loss,
    triplet_loss_mined,
    vmnet_combined_loss,
)
from avmatch.tensor import Tensor


def _rng(seed=0):
    return np.random.default_rng(seed)


class TestCosineSimilarity:
    def test_same_unit_vector(self):
        u = Tensor([[1.0, 0.0]])
        sim = cosine_similarity_matrix(u, u)
        np.testing.assert_allclose(sim.values.data, [[1.0]], atol=1e-6)

    def test_orthogonal(self):
        sim = cosine_similarity_matrix(Tensor([[1.0, 0.0]]),
                                       Tensor([[0.0, 1.0]]))
        np.testing.assert_allclose(sim.values.data, [[0.0]], atol=1e-7)

    def test_hand_value(self):
        sim = cosine_similarity_matrix(Tensor([[1.0, 0.0]]),
                                       Tensor([[1.0, 1.0]]))
        np.testing.assert_allclose(sim.values.data, [[1 / np.sqrt(2)]],
                                   atol=1e-6)

    def test_width_mismatch(self):
        with pytest.raises(ShapeError):
            cosine_similarity_matrix(Tensor(np.zeros((2, 3))),
                                     Tensor(np.zeros((2, 4))))

    def test_entries_bounded(self):
        sim = cosine_similarity_matrix(Tensor(_rng(1).normal(size=(6, 8))),
                                       Tensor(_rng(2).normal(size=(5, 8))))
        assert sim.values.data.max() <= 1.0 + 1e-6
        assert sim.values.data.min() >= -1.0 - 1e-6


class TestInfoNCE:
    def test_constant_similarities_give_ln_n(self):
        for n in (2, 5, 8):
            sim = Tensor(np.full((n, n), 0.3))
            loss = infonce_loss(sim, 0.07, symmetric=True)
            np.testing.assert_allclose(loss.item(), np.log(n), atol=1e-6)

    def test_two_by_two_hand_value(self):
        sim = Tensor([[1.0, 0.0], [0.0, 1.0]])
        loss = infonce_loss(sim, 1.0, symmetric=False)
        np.testing.assert_allclose(loss.item(), np.log(1 + np.exp(-1.0)),
                                   atol=1e-6)

    def test_sharp_diagonal_near_zero(self):
        sim = Tensor(np.full((4, 4), -1.0) + 2.0 * np.eye(4))
        loss = infonce_loss(sim, 0.05)
        assert 0.0 <= loss.item() < 1e-6

    def test_nonnegative(self):
        for seed in range(5):
            sim = Tensor(_rng(seed).uniform(-1, 1, size=(6, 6)))
            assert infonce_loss(sim, 0.1).item() >= 0.0

    def test_row_shift_invariance(self):
        sim = _rng(3).uniform(-1, 1, size=(5, 5))
        shifts = _rng(4).normal(size=(5, 1))
        base = infonce_loss(Tensor(sim), 0.3, symmetric=False).item()
        shifted = infonce_loss(Tensor(sim + shifts), 0.3,
                               symmetric=False).item()
        np.testing.assert_allclose(base, shifted, atol=1e-5)

    def test_diagonal_increase_strictly_decreases(self):
        sim = _rng(5).uniform(-0.5, 0.5, size=(4, 4))
        base = infonce_loss(Tensor(sim), 0.2).item()
        bumped = sim.copy()
        bumped[2, 2] += 0.1
        assert infonce_loss(Tensor(bumped), 0.2).item() < base

    def test_rejects_non_square(self):
        with pytest.raises(ShapeError):
            infonce_loss(Tensor(np.zeros((2, 3))), 0.1)

    def test_rejects_bad_temperature(self):
        with pytest.raises(ParameterError):
            infonce_loss(Tensor(np.eye(2)), -0.1)


class TestTripletMined:
    def test_no_violations_zero(self):
        sim = np.full((4, 4), -1.0) + 2.0 * np.eye(4)
        loss = triplet_loss_mined(Tensor(sim), margin=0.5, top_q=5)
        assert loss.item() == 0.0

    def test_hand_value(self):
        sim = Tensor([[0.2, 0.5], [0.5, 0.2]])
        loss = triplet_loss_mined(sim, margin=0.5, top_q=1)
        np.testing.assert_allclose(loss.item(), 0.8, atol=1e-6)

    def test_margin_monotonicity(self):
        sim = Tensor(_rng(6).uniform(-1, 1, size=(6, 6)))
        values = [triplet_loss_mined(sim, m, 10).item()
                  for m in np.linspace(0.0, 1.0, 11)]
        assert all(b >= a - 1e-7 for a, b in zip(values, values[1:]))

    def test_degenerate_batch(self):
        with pytest.raises(DegenerateInputError):
            triplet_loss_mined(Tensor([[1.0]]), 0.2, 1)

    def test_zero_iff_no_violation(self):
        # one violating pair forces a positive loss
        sim = np.full((3, 3), -1.0) + 2.0 * np.eye(3)
        sim[0, 1] = 0.9  # violates margin against sim[0, 0] = 1.0 at m=0.2
        assert triplet_loss_mined(Tensor(sim), 0.2, 5).item() > 0.0


def _structure_loss_bruteforce(feats, emb, k):
    """Independent loop-based oracle for the ranking-hinge structure loss."""
    n = feats.shape[0]
    din = np.linalg.norm(feats[:, None] - feats[None, :], axis=-1)
    demb = np.sqrt(
        np.maximum(
            np.linalg.norm(emb[:, None] - emb[None, :], axis=-1) ** 2, 0.0
        ) + 1e-12
    )
    terms = []
    for i in range(n):
        d = din[i].copy()
        d[i] = np.inf
        nbrs = np.argsort(d, kind="stable")[:k]
        for a in range(k):
            for b in range(a + 1, k):
                if d[nbrs[a]] < d[nbrs[b]]:
                    terms.append(max(0.0, demb[i, nbrs[a]] - demb[i, nbrs[b]]))
    return float(np.mean(terms)) if terms else 0.0


class TestIntraModalStructure:
    def test_identity_embeddings_zero(self):
        feats = _rng(7).normal(size=(12, 6))
        loss = intra_modal_structure_loss(feats, Tensor(feats.copy()), k=4)
        assert loss.item() == 0.0

    def test_matches_bruteforce_oracle(self):
        for seed in range(4):
            feats = _rng(seed).normal(size=(10, 3))
            emb = _rng(seed + 100).normal(size=(10, 5))
            got = intra_modal_structure_loss(feats, Tensor(emb), k=4).item()
            want = _structure_loss_bruteforce(feats, emb, 4)
            np.testing.assert_allclose(got, want, rtol=1e-5)

    def test_rotation_invariance(self):
        feats = _rng(8).normal(size=(9, 4))
        emb = _rng(9).normal(size=(9, 6))
        q, _ = np.linalg.qr(_rng(10).normal(size=(6, 6)))
        base = intra_modal_structure_loss(feats, Tensor(emb), 3).item()
        rotated = intra_modal_structure_loss(feats, Tensor(emb @ q), 3).item()
        np.testing.assert_allclose(base, rotated, atol=1e-5)

    def test_zero_under_scaling(self):
        feats = _rng(11).normal(size=(8, 5))
        loss = intra_modal_structure_loss(feats, Tensor(2.5 * feats), 3)
        assert loss.item() == 0.0

    def test_zero_under_monotone_distance_remap(self):
        # colinear points whose embedding distances grow monotonically
        # (nonlinearly) with input distances
        feats = np.array([[0.0], [1.0], [3.0], [7.0]])
        emb = np.array([[0.0], [1.0], [9.0], [49.0]])  # squared gaps
        loss = intra_modal_structure_loss(feats, Tensor(emb), 2)
        assert loss.item() == 0.0

    def test_rejects_small_n(self):
        with pytest.raises(ParameterError):
            intra_modal_structure_loss(np.zeros((3, 2)),
                                       Tensor(np.zeros((3, 2))), k=3)


class TestCombinedLoss:
    def _batch(self, seed, n=8):
        rng = _rng(seed)
        a_in = rng.normal(size=(n, 6))
        v_in = rng.normal(size=(n, 9))
        a_emb = Tensor(rng.normal(size=(n, 5)))
        v_emb = Tensor(rng.normal(size=(n, 5)))
        sim = cosine_similarity_matrix(a_emb, v_emb)
        return sim, a_in, v_in, a_emb, v_emb

    def test_zero_structure_weight_is_triplet(self):
        sim, a_in, v_in, a_emb, v_emb = self._batch(12)
        cfg = LossConfig(margin=0.3, top_q=4, intra_k=3, structure_weight=0.0)
        combined = vmnet_combined_loss(sim, a_in, v_in, a_emb, v_emb, cfg)
        np.testing.assert_allclose(
            combined.item(), triplet_loss_mined(sim, 0.3, 4).item(), rtol=1e-6)

    def test_perfect_embeddings_zero(self):
        n = 6
        sim = SimilarityMatrix(Tensor(np.full((n, n), -1.0) + 2 * np.eye(n)))
        feats = _rng(13).normal(size=(n, 4))
        emb = Tensor(feats.copy())
        cfg = LossConfig(margin=0.5, top_q=3, intra_k=2)
        loss = vmnet_combined_loss(sim, feats, feats, emb, emb, cfg)
        assert loss.item() == 0.0

    def test_equals_sum_of_constituents(self):
        sim, a_in, v_in, a_emb, v_emb = self._batch(14)
        cfg = LossConfig(margin=0.25, top_q=5, intra_k=3, structure_weight=1.0)
        combined = vmnet_combined_loss(sim, a_in, v_in, a_emb, v_emb, cfg)
        parts = (
            triplet_loss_mined(sim, cfg.margin, cfg.top_q).item()
            + intra_modal_structure_loss(a_in, a_emb, cfg.intra_k).item()
            + intra_modal_structure_loss(v_in, v_emb, cfg.intra_k).item()
        )
        np.testing.assert_allclose(combined.item(), parts, rtol=1e-5)
