"""Tensor core: op semantics, backward rules, and finite-difference oracles."""

import math

import numpy as np
import pytest

from avmatch.errors import DegenerateInputError, ParameterError, ShapeError
from avmatch.tensor import (
    Tensor,
    concat,
    dropout,
    finite_diff_check,
    l2_normalize_rows,
    matmul,
    reduce,
    softmax_rows,
)


class TestMatmul:
    def test_identity(self):
        x = Tensor([[1.0, 2.0], [3.0, 4.0]])
        out = matmul(Tensor(np.eye(2, dtype=np.float32)), x)
        np.testing.assert_array_equal(out.data, x.data)

    def test_hand_value(self):
        out = matmul(Tensor([[1.0, 2.0], [3.0, 4.0]]), Tensor([[1.0], [1.0]]))
        np.testing.assert_allclose(out.data, [[3.0], [7.0]])

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
            matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(0)
        a = Tensor(rng.normal(size=(3, 4)), requires_grad=True, dtype=np.float64)
        b = Tensor(rng.normal(size=(4, 2)), dtype=np.float64)
        err = finite_diff_check(lambda a: matmul(a, b).sum(), [a])
        assert err < 1e-4


class TestRelu:
    def test_elementwise(self):
        out = Tensor([-1.0, 0.0, 2.0]).relu()
        np.testing.assert_array_equal(out.data, [0.0, 0.0, 2.0])

    def test_all_negative_zero_gradient(self):
        x = Tensor([-1.0, -2.0], requires_grad=True)
        x.relu().sum().backward()
        np.testing.assert_array_equal(x.grad, [0.0, 0.0])

    def test_finite_difference_away_from_kink(self):
        x = Tensor([0.5, -0.7, 1.3], requires_grad=True, dtype=np.float64)
        err = finite_diff_check(lambda x: (x.relu() * x.relu()).sum(), [x])
        assert err < 1e-4


class TestSoftmaxRows:
    def test_constant_row_uniform(self):
        for temp in (0.05, 1.0, 7.0):
            out = softmax_rows(Tensor([[3.0, 3.0, 3.0]]), temp)
            np.testing.assert_allclose(out.data, [[1 / 3] * 3], atol=1e-7)

    def test_scalar_value(self):
        out = softmax_rows(Tensor([[1.0, 0.0]]), 1.0)
        e = math.e
        np.testing.assert_allclose(out.data, [[e / (e + 1), 1 / (e + 1)]],
                                   atol=1e-6)

    def test_large_logits_do_not_overflow(self):
        out = softmax_rows(Tensor([[1000.0, 0.0]]), 1.0)
        assert np.all(np.isfinite(out.data))
        np.testing.assert_allclose(out.data, [[1.0, 0.0]], atol=1e-12)

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(1)
        out = softmax_rows(Tensor(rng.normal(size=(10, 7)) * 5), 0.1)
        np.testing.assert_allclose(out.data.sum(axis=-1), 1.0, atol=1e-6)

    def test_bad_temperature(self):
        with pytest.raises(ParameterError):
            softmax_rows(Tensor([[1.0, 2.0]]), 0.0)


class TestReduce:
    def test_mean(self):
        out = reduce(Tensor([[1.0, 3.0], [3.0, 5.0]]), "mean")
        np.testing.assert_allclose(out.data, [2.0, 4.0])

    def test_max_constant(self):
        out = reduce(Tensor([[2.0, 5.0]] * 4), "max")
        np.testing.assert_allclose(out.data, [2.0, 5.0])

    def test_std_population(self):
        out = reduce(Tensor([[0.0], [2.0]]), "std")
        np.testing.assert_allclose(out.data, [1.0], atol=1e-6)

    def test_std_single_row(self):
        with pytest.raises(DegenerateInputError):
            reduce(Tensor([[1.0, 2.0]]), "std")


class TestL2NormalizeRows:
    def test_345_triangle(self):
        out = l2_normalize_rows(Tensor([[3.0, 4.0]]))
        np.testing.assert_allclose(out.data, [[0.6, 0.8]], atol=1e-7)

    def test_idempotent(self):
        rng = np.random.default_rng(2)
        x = Tensor(rng.normal(size=(6, 8)))
        once = l2_normalize_rows(x)
        twice = l2_normalize_rows(once)
        np.testing.assert_allclose(once.data, twice.data, atol=1e-6)

    def test_output_norms(self):
        rng = np.random.default_rng(3)
        out = l2_normalize_rows(Tensor(rng.normal(size=(20, 16)) * 10))
        np.testing.assert_allclose(np.linalg.norm(out.data, axis=1), 1.0,
                                   atol=1e-6)

    def test_degenerate_row_passes_through(self):
        out = l2_normalize_rows(Tensor([[0.0, 0.0], [3.0, 4.0]]))
        np.testing.assert_allclose(out.data, [[0.0, 0.0], [0.6, 0.8]], atol=1e-7)


class TestDropout:
    def test_p_zero_identity(self):
        x = Tensor(np.ones((4, 4)))
        rng = np.random.default_rng(0)
        for training in (True, False):
            np.testing.assert_array_equal(
                dropout(x, 0.0, training, rng).data, x.data)

    def test_eval_identity(self):
        x = Tensor(np.ones((4, 4)))
        out = dropout(x, 0.5, False, np.random.default_rng(0))
        np.testing.assert_array_equal(out.data, x.data)

    def test_law_of_large_numbers(self):
        rng = np.random.default_rng(7)
        x = Tensor(np.full(100_000, 2.0, dtype=np.float32))
        out = dropout(x, 0.5, True, rng)
        survivors = (out.data != 0).mean()
        assert abs(survivors - 0.5) < 0.01
        assert abs(out.data.mean() - 2.0) / 2.0 < 0.02

    def test_invalid_rate(self):
        with pytest.raises(ParameterError):
            dropout(Tensor([1.0]), 1.0, True, np.random.default_rng(0))


class TestBackward:
    def test_sum_gives_ones(self):
        x = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
        x.sum().backward()
        np.testing.assert_array_equal(x.grad, np.ones((2, 3)))

    def test_square_sum(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        (x * x).sum().backward()
        np.testing.assert_allclose(x.grad, [2.0, 4.0])

    def test_non_scalar_rejected(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with pytest.raises(ShapeError):
            (x * 2).backward()

    def test_accumulation_across_calls(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        x.sum().backward()
        (x * x).sum().backward()
        np.testing.assert_allclose(x.grad, [3.0, 5.0])

    def test_additivity_f_plus_g(self):
        rng = np.random.default_rng(4)
        vals = rng.normal(size=(3, 3))

        def grads_of(fn):
            x = Tensor(vals.copy(), requires_grad=True)
            fn(x).backward()
            return x.grad

        f = lambda x: (x * x).sum()
        g = lambda x: x.exp().sum()
        combined = grads_of(lambda x: f(x) + g(x))
        np.testing.assert_allclose(combined, grads_of(f) + grads_of(g),
                                   atol=1e-6)

    def test_fanout_accumulates(self):
        x = Tensor([3.0], requires_grad=True)
        y = x * 2.0
        (y + y).sum().backward()
        np.testing.assert_allclose(x.grad, [4.0])


class TestFiniteDiffCheck:
    def test_linear_near_exact(self):
        x = Tensor([1.0, -2.0, 3.0], requires_grad=True, dtype=np.float64)
        err = finite_diff_check(lambda x: (x * 3.0).sum(), [x])
        assert err < 1e-8

    def test_non_scalar_f_rejected(self):
        x = Tensor([1.0, 2.0], requires_grad=True, dtype=np.float64)
        with pytest.raises(ShapeError):
            finite_diff_check(lambda x: x * 2, [x])

    def test_bad_eps(self):
        x = Tensor([1.0], requires_grad=True, dtype=np.float64)
        with pytest.raises(ParameterError):
            finite_diff_check(lambda x: x.sum(), [x], eps=0.0)


class TestDeterminism:
    def test_same_seed_bit_identical(self):
        def run():
            rng = np.random.default_rng(11)
            x = Tensor(rng.normal(size=(8, 8)).astype(np.float32))
            return dropout(softmax_rows(x, 0.3), 0.4, True,
                           np.random.default_rng(5)).data

        np.testing.assert_array_equal(run(), run())


class TestConcatAndIndexing:
    def test_concat_backward_splits(self):
        a = Tensor([[1.0, 2.0]], requires_grad=True)
        b = Tensor([[3.0]], requires_grad=True)
        concat([a, b], axis=1).sum().backward()
        np.testing.assert_array_equal(a.grad, [[1.0, 1.0]])
        np.testing.assert_array_equal(b.grad, [[1.0]])

    def test_fancy_index_repeats_accumulate(self):
        x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
        x[np.array([0, 0, 2])].sum().backward()
        np.testing.assert_array_equal(x.grad, [2.0, 0.0, 1.0])
