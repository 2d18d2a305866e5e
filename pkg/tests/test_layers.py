"""Layer semantics: linear, batchnorm, positional encoding, attention,
transformer blocks, BiLSTM, and parameter counting."""

import numpy as np
import pytest

from avmatch.errors import DegenerateInputError, ParameterError
from avmatch.layers import (
    BatchNorm,
    BiLSTM,
    Linear,
    MultiHeadAttention,
    TransformerEncoder,
    param_count,
    positional_encoding,
)
from avmatch.tensor import Tensor, finite_diff_check


def _rng(seed=0):
    return np.random.default_rng(seed)


class TestLinear:
    def test_identity_weight(self):
        lin = Linear(3, 3, _rng())
        lin.weight.data = np.eye(3, dtype=np.float32)
        x = Tensor([[1.0, 2.0, 3.0]])
        np.testing.assert_allclose(lin.forward(x).data, x.data)

    def test_hand_value(self):
        lin = Linear(2, 1, _rng())
        lin.weight.data = np.array([[1.0], [2.0]], dtype=np.float32)
        lin.bias.data = np.array([0.5], dtype=np.float32)
        out = lin.forward(Tensor([[1.0, 1.0]]))
        np.testing.assert_allclose(out.data, [[3.5]])

    def test_gradient(self):
        lin = Linear(4, 3, _rng(1), dtype=np.float64)
        x = Tensor(_rng(2).normal(size=(2, 4)), dtype=np.float64)
        err = finite_diff_check(
            lambda w, b: (lin.forward(x) ** 2).sum(),
            [lin.weight, lin.bias])
        assert err < 1e-4

    def test_param_count(self):
        assert param_count(Linear(128, 512, _rng())) == 66_048


class TestBatchNorm:
    def test_training_normalizes(self):
        bn = BatchNorm(4)
        x = Tensor(_rng(3).normal(loc=5.0, scale=3.0, size=(64, 4)))
        out = bn.forward(x, training=True)
        np.testing.assert_allclose(out.data.mean(axis=0), 0.0, atol=1e-5)
        np.testing.assert_allclose(out.data.var(axis=0), 1.0, atol=1e-4)

    def test_eval_identity_with_unit_stats(self):
        bn = BatchNorm(3, eps=1e-5)
        x = Tensor(_rng(4).normal(size=(5, 3)))
        out = bn.forward(x, training=False)
        np.testing.assert_allclose(out.data, x.data, atol=1e-4)

    def test_momentum_update_hand_computed(self):
        bn = BatchNorm(1, momentum=0.1)
        x = np.array([[1.0], [3.0]], dtype=np.float32)
        bn.forward(Tensor(x), training=True)
        np.testing.assert_allclose(bn.running_mean, [0.1 * 2.0], atol=1e-6)
        np.testing.assert_allclose(bn.running_var, [0.9 * 1.0 + 0.1 * 1.0],
                                   atol=1e-6)

    def test_degenerate_batch(self):
        bn = BatchNorm(2)
        with pytest.raises(DegenerateInputError):
            bn.forward(Tensor([[1.0, 2.0]]), training=True)


class TestPositionalEncoding:
    def test_row_zero_alternates(self):
        table = positional_encoding(3, 6).data
        np.testing.assert_allclose(table[0], [0, 1, 0, 1, 0, 1], atol=1e-7)

    def test_scalar_value(self):
        table = positional_encoding(2, 4).data
        np.testing.assert_allclose(table[1, 0], np.sin(1.0), atol=1e-6)

    def test_range(self):
        table = positional_encoding(50, 32).data
        assert table.min() >= -1.0 and table.max() <= 1.0

    def test_odd_dim_rejected(self):
        with pytest.raises(ParameterError):
            positional_encoding(4, 7)


class TestMultiHeadAttention:
    def test_single_timestep(self):
        attn = MultiHeadAttention(8, 2, _rng(5))
        x = Tensor(_rng(6).normal(size=(1, 8)).astype(np.float32))
        weights = attn.attention_weights(x)
        np.testing.assert_allclose(weights, 1.0, atol=1e-7)
        # output equals out-projection of the value projection
        v = attn.v_proj.forward(x)
        expected = attn.out_proj.forward(v)
        np.testing.assert_allclose(attn.forward(x).data, expected.data,
                                   atol=1e-5)

    def test_identical_rows_give_identical_rows(self):
        attn = MultiHeadAttention(8, 4, _rng(7))
        row = _rng(8).normal(size=(1, 8)).astype(np.float32)
        x = Tensor(np.repeat(row, 5, axis=0))
        out = attn.forward(x).data
        np.testing.assert_allclose(out, np.repeat(out[:1], 5, axis=0),
                                   atol=1e-5)

    def test_weight_rows_sum_to_one(self):
        attn = MultiHeadAttention(16, 4, _rng(9))
        x = Tensor(_rng(10).normal(size=(3, 6, 16)).astype(np.float32))
        weights = attn.attention_weights(x)
        np.testing.assert_allclose(weights.sum(axis=-1), 1.0, atol=1e-6)

    def test_indivisible_heads_rejected(self):
        with pytest.raises(ParameterError):
            MultiHeadAttention(10, 4, _rng())


class TestTransformerEncoder:
    def test_zero_layers_is_positional_encoding(self):
        enc = TransformerEncoder(8, 2, 16, 0, 0.0, _rng(11))
        x = Tensor(_rng(12).normal(size=(4, 8)).astype(np.float32))
        out = enc.forward(x, training=False, rng=_rng(0))
        expected = x.data + positional_encoding(4, 8).data
        np.testing.assert_allclose(out.data, expected, atol=1e-6)

    def test_shape_contract(self):
        enc = TransformerEncoder(512, 8, 64, 1, 0.0, _rng(13))
        x = Tensor(_rng(14).normal(size=(15, 512)).astype(np.float32))
        out = enc.forward(x, training=False, rng=_rng(0))
        assert out.shape == (15, 512)

    def test_permutation_equivariant_without_positional(self):
        enc = TransformerEncoder(8, 2, 16, 2, 0.0, _rng(15),
                                 use_positional=False)
        x = _rng(16).normal(size=(4, 8)).astype(np.float32)
        perm = np.array([2, 0, 3, 1])
        out = enc.forward(Tensor(x), training=False, rng=_rng(0)).data
        out_perm = enc.forward(Tensor(x[perm]), training=False,
                               rng=_rng(0)).data
        np.testing.assert_allclose(out_perm, out[perm], atol=1e-4)

    def test_order_sensitive_with_positional(self):
        enc = TransformerEncoder(8, 2, 16, 2, 0.0, _rng(17))
        x = _rng(18).normal(size=(4, 8)).astype(np.float32)
        perm = np.array([3, 1, 0, 2])
        pooled = enc.forward(Tensor(x), False, _rng(0)).data.max(axis=0)
        pooled_perm = enc.forward(Tensor(x[perm]), False, _rng(0)).data.max(axis=0)
        assert np.abs(pooled - pooled_perm).max() > 1e-4

    def test_micro_gradient_check(self):
        enc = TransformerEncoder(8, 2, 12, 1, 0.0, _rng(19), dtype=np.float64)
        x = Tensor(_rng(20).normal(size=(3, 8)), dtype=np.float64)
        params = list(enc.parameters().values())
        err = finite_diff_check(
            lambda *ps: (enc.forward(x, True, _rng(0)) ** 2).sum() * 0.1,
            params, eps=1e-4)
        assert err < 1e-3


class TestBiLSTM:
    def test_zero_weights_zero_output(self):
        lstm = BiLSTM(3, 4, 2, 0.0, _rng(21))
        for w in lstm.weights:
            w.data[...] = 0.0
        for b in lstm.biases:
            b.data[...] = 0.0
        x = Tensor(_rng(22).normal(size=(2, 5, 3)).astype(np.float32))
        out = lstm.forward(x, training=False, rng=_rng(0))
        np.testing.assert_array_equal(out.data, np.zeros((2, 5, 8)))

    def test_single_timestep_hand_cell(self):
        # all gate pre-activations 0, candidate pre-activation g:
        # h = sigmoid(0) * tanh(sigmoid(0) * tanh(g))
        g = 0.8
        lstm = BiLSTM(2, 1, 1, 0.0, _rng(23))
        for w in lstm.weights:
            w.data[...] = 0.0
        for b in lstm.biases:
            b.data[...] = 0.0
            b.data[2] = g  # candidate slot in (i, f, g, o) layout
        x = Tensor(np.zeros((1, 1, 2), dtype=np.float32))
        out = lstm.forward(x, training=False, rng=_rng(0))
        expected = 0.5 * np.tanh(0.5 * np.tanh(g))
        np.testing.assert_allclose(out.data.reshape(-1),
                                   [expected, expected], atol=1e-6)

    def test_reversal_swaps_directions_with_tied_weights(self):
        lstm = BiLSTM(3, 4, 1, 0.0, _rng(24))
        lstm.weights[1].data = lstm.weights[0].data.copy()
        lstm.biases[1].data = lstm.biases[0].data.copy()
        x = _rng(25).normal(size=(1, 6, 3)).astype(np.float32)
        out = lstm.forward(Tensor(x), False, _rng(0)).data[0]
        out_rev = lstm.forward(Tensor(x[:, ::-1].copy()), False, _rng(0)).data[0]
        h = 4
        np.testing.assert_allclose(out_rev[:, :h], out[::-1, h:], atol=1e-5)
        np.testing.assert_allclose(out_rev[:, h:], out[::-1, :h], atol=1e-5)

    def test_micro_gradient_check(self):
        lstm = BiLSTM(3, 4, 2, 0.0, _rng(26), dtype=np.float64)
        x = Tensor(_rng(27).normal(size=(2, 3, 3)), dtype=np.float64)
        params = list(lstm.parameters().values())
        err = finite_diff_check(
            lambda *ps: (lstm.forward(x, True, _rng(0)) ** 2).sum() * 0.1,
            params, eps=1e-4)
        assert err < 1e-3
