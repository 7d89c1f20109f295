from __future__ import annotations

import math

import numpy as np
import pytest

from gradcheck import check_gradients, leaf

from taxbox import autodiff as ad
from taxbox.autodiff import Tensor, backward


def test_softmax_of_equal_logits_is_uniform():
    out = Tensor(np.array([0.0, 0.0])).softmax()
    np.testing.assert_allclose(out.data, [0.5, 0.5])


def test_softplus_at_zero_is_log_two():
    out = Tensor(np.array(0.0)).softplus()
    assert out.item() == pytest.approx(math.log(2.0), abs=1e-12)


def test_matmul_shape_rule():
    a = Tensor(np.zeros((2, 3)))
    b = Tensor(np.zeros((3, 1)))
    assert (a @ b).shape == (2, 1)


def test_matmul_shape_mismatch_names_op():
    with pytest.raises(ValueError, match="matmul"):
        Tensor(np.zeros((2, 3))) @ Tensor(np.zeros((2, 3)))


def test_softmax_rows_sum_to_one():
    rng = np.random.default_rng(0)
    x = Tensor(rng.normal(size=(5, 7)) * 10)
    sums = x.softmax(axis=1).data.sum(axis=1)
    assert np.all(np.abs(sums - 1.0) <= 1e-12)


def test_dropout_eval_is_identity():
    x = Tensor(np.arange(6.0).reshape(2, 3))
    assert ad.dropout(x, 0.5, train=False) is x


def test_dropout_train_scales_kept_entries():
    rng = np.random.default_rng(1)
    x = Tensor(np.ones((200, 50)))
    out = ad.dropout(x, 0.25, train=True, rng=rng).data
    kept = out > 0
    np.testing.assert_allclose(out[kept], 1.0 / 0.75)
    assert abs(kept.mean() - 0.75) < 0.02


def test_backward_requires_scalar():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ValueError, match="scalar"):
        backward(x * 2.0)


def test_grad_of_sum_is_ones():
    w = Tensor(np.arange(4.0), requires_grad=True)
    backward(w.sum())
    np.testing.assert_allclose(w.grad, np.ones(4))


def test_grad_of_sum_of_squares_is_two_w():
    w = Tensor(np.arange(1.0, 5.0), requires_grad=True)
    backward((w * w).sum())
    np.testing.assert_allclose(w.grad, 2.0 * w.data)


def test_backward_twice_doubles_gradients():
    w = Tensor(np.arange(3.0), requires_grad=True)
    loss = (w * w).sum()
    backward(loss)
    first = w.grad.copy()
    backward(loss)
    np.testing.assert_allclose(w.grad, 2.0 * first)


def test_scalar_operand_keeps_float32():
    x = Tensor(np.ones(3, dtype=np.float32), requires_grad=True)
    assert (x * 0.5 + 1.0 - 0.25).dtype == np.float32
    assert (1.0 / x).dtype == np.float32


# -- per-op finite-difference checks ---------------------------------------


def test_grad_arithmetic_with_broadcasting():
    rng = np.random.default_rng(2)
    a = leaf(rng, 4, 5)
    b = leaf(rng, 5)
    c = leaf(rng, 4, 1, lo=0.5, hi=1.5)
    check_gradients(lambda: ((a + b) * c - b / c).sum(), [a, b, c])


def test_grad_matmul():
    rng = np.random.default_rng(3)
    a = leaf(rng, 3, 4)
    b = leaf(rng, 4, 2)
    check_gradients(lambda: ((a @ b) * (a @ b)).sum(), [a, b])


def test_grad_elementwise_unary():
    rng = np.random.default_rng(4)
    x = leaf(rng, 8, lo=0.2, hi=2.0)
    check_gradients(lambda: (x.exp() + x.log() + x.log1p() + x.sqrt()
                             + x.sigmoid() + x.softplus()).sum(), [x])


def test_grad_relu_family_away_from_kinks():
    rng = np.random.default_rng(5)
    x = Tensor(np.concatenate([rng.uniform(0.1, 1, 8), rng.uniform(-1, -0.1, 8)]),
               requires_grad=True)
    check_gradients(lambda: (x.relu() + x.leaky_relu(0.2)).sum(), [x])


def test_grad_maximum_minimum():
    rng = np.random.default_rng(6)
    a = leaf(rng, 10)
    b = Tensor(a.data + np.where(rng.random(10) > 0.5, 0.3, -0.3),
               requires_grad=True)
    check_gradients(lambda: (ad.maximum(a, b) * 2.0 + ad.minimum(a, b)).sum(), [a, b])


def test_grad_softmax():
    rng = np.random.default_rng(7)
    x = leaf(rng, 4, 6)
    w = Tensor(rng.normal(size=(4, 6)))
    check_gradients(lambda: (x.softmax(axis=1) * w).sum(), [x])
    check_gradients(lambda: (x.softmax(axis=0) * w).sum(), [x])


def test_grad_reductions():
    rng = np.random.default_rng(8)
    x = leaf(rng, 3, 4, lo=0.5, hi=1.5)
    check_gradients(lambda: x.sum(axis=0).sqrt().sum(), [x])
    check_gradients(lambda: x.mean(axis=1, keepdims=True).sum(), [x])
    check_gradients(lambda: x.prod(axis=1).sum(), [x])
    check_gradients(lambda: x.prod().reshape(1).sum(), [x])


def test_grad_concat_slice_gather_reshape():
    rng = np.random.default_rng(9)
    a = leaf(rng, 4, 3)
    b = leaf(rng, 2, 3)
    idx = np.array([0, 2, 2, 5])

    def f():
        cat = ad.concat([a, b], axis=0)
        return (cat[idx] * cat[1:5]).reshape(12).sum()

    check_gradients(f, [a, b])


def test_grad_clip_interior_and_where():
    rng = np.random.default_rng(10)
    x = leaf(rng, 12, lo=-2.0, hi=2.0)
    mask = rng.random(12) > 0.5

    def f():
        clipped = x.clip(-0.9, 0.9)  # some entries saturate, none sit on the edge
        return ad.where(mask, clipped * 2.0, x.exp()).sum()

    check_gradients(f, [x])


def test_grad_composite_expression():
    rng = np.random.default_rng(11)
    x = leaf(rng, 2, 5)
    w = leaf(rng, 5, 5)

    def f():
        h = (x @ w).sigmoid()
        return ((h * h).sum(axis=1).sqrt() + h.softmax(axis=1).log().sum(axis=1)).sum()

    check_gradients(f, [x, w], rel=1e-5)
