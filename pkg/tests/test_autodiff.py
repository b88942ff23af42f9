"""Unit tests for the reverse-mode engine."""

import numpy as np
import pytest

from udaselect import autodiff as ad
from udaselect.autodiff import Node, backward
from udaselect.errors import ContractError, NumericError

from fdcheck import assert_grads_close


class TestMatmul:
    def test_identity(self):
        a = Node(np.eye(2))
        b = Node([[2.0, 3.0], [4.0, 5.0]])
        assert np.array_equal(ad.matmul(a, b).value, b.value)

    def test_inner_product(self):
        out = ad.matmul(Node([[1.0, 2.0]]), Node([[3.0], [4.0]]))
        assert out.value[0, 0] == 11.0

    def test_shape_mismatch(self):
        with pytest.raises(ContractError):
            ad.matmul(Node(np.ones((2, 3))), Node(np.ones((2, 3))))

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(7)
        a = Node(rng.normal(size=(3, 3)))
        b = Node(rng.normal(size=(3, 3)))
        assert_grads_close(lambda: ad.sum_all(ad.matmul(a, b)), [a, b], atol=1e-6)


class TestRelu:
    def test_values(self):
        out = ad.relu(Node([-1.0, 0.0, 2.0]))
        assert np.array_equal(out.value, [0.0, 0.0, 2.0])

    def test_all_negative_zero_grad(self):
        a = Node([-1.0, -2.0, -3.0])
        backward(ad.sum_all(ad.relu(a)))
        assert np.array_equal(a.grad, np.zeros(3))

    def test_gradient_away_from_kink(self):
        rng = np.random.default_rng(3)
        vals = rng.normal(size=6)
        vals[np.abs(vals) < 1e-2] = 0.5
        a = Node(vals)
        assert_grads_close(lambda: ad.sum_all(ad.relu(a)), [a])


class TestSoftmax:
    def test_uniform(self):
        out = ad.softmax_rows(Node([[0.0, 0.0, 0.0]]))
        np.testing.assert_allclose(out.value, 1.0 / 3.0)

    def test_stability(self):
        out = ad.softmax_rows(Node([[1000.0, 0.0]]))
        assert out.value[0, 0] == pytest.approx(1.0)
        assert out.value[0, 1] == pytest.approx(0.0, abs=1e-300)

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(0)
        out = ad.softmax_rows(Node(rng.normal(size=(5, 4)) * 10))
        np.testing.assert_allclose(out.value.sum(axis=1), 1.0, atol=1e-12)

    def test_cross_entropy_gradient_is_p_minus_onehot(self):
        rng = np.random.default_rng(1)
        logits = Node(rng.normal(size=(1, 4)))

        def loss_fn():
            probs = ad.softmax_rows(logits)
            picked = ad.gather(probs, [0], [2])
            return ad.mean_all(ad.affine(ad.log(ad.clamp_min(picked, 1e-12)), -1.0))

        backward(loss_fn())
        p = ad.softmax_rows(Node(logits.value)).value[0]
        onehot = np.eye(4)[2]
        np.testing.assert_allclose(logits.grad[0], p - onehot, atol=1e-8)
        logits.zero_grad()
        assert_grads_close(loss_fn, [logits], atol=1e-8)


class TestSigmoid:
    def test_zero(self):
        assert ad.sigmoid(Node([0.0])).value[0] == 0.5

    def test_large_negative_no_overflow(self):
        out = ad.sigmoid(Node([-1000.0]))
        assert 0.0 <= out.value[0] < 1e-300

    def test_gradient(self):
        a = Node(np.linspace(-3, 3, 7))
        assert_grads_close(lambda: ad.sum_all(ad.sigmoid(a)), [a], atol=1e-8)


class TestGradReverse:
    def test_forward_identity(self):
        a = Node([1.0, 2.0, 3.0])
        out = ad.grad_reverse(a, 1.0)
        assert np.array_equal(out.value, a.value)

    @pytest.mark.parametrize("lam", [0.0, 0.5, 1.0])
    def test_backward_negates_and_scales(self, lam):
        a = Node([[1.0, -2.0, 0.5]])
        upstream = np.array([[3.0], [1.0], [-4.0]])
        out = ad.matmul(ad.grad_reverse(a, lam), Node(upstream))
        backward(ad.sum_all(out))
        np.testing.assert_allclose(a.grad, -lam * upstream.T)

    def test_negative_lambda_rejected(self):
        with pytest.raises(ContractError):
            ad.grad_reverse(Node([1.0]), -0.1)


class TestBackward:
    def test_sum_of_parameters(self):
        a = Node(np.ones((2, 3)))
        backward(ad.sum_all(a))
        assert np.array_equal(a.grad, np.ones((2, 3)))

    def test_fan_out_accumulates(self):
        a = Node([2.0])
        backward(ad.sum_all(ad.add(a, a)))
        assert np.array_equal(a.grad, [2.0])

    def test_shared_subexpression_equals_expanded_tree(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(2, 2))
        a = Node(x)
        shared = ad.relu(a)
        backward(ad.sum_all(ad.add(ad.square(shared), shared)))
        g_shared = a.grad.copy()

        a2 = Node(x)
        backward(ad.sum_all(ad.add(ad.square(ad.relu(a2)), ad.relu(a2))))
        np.testing.assert_array_equal(g_shared, a2.grad)

    def test_non_scalar_loss_rejected(self):
        with pytest.raises(ContractError):
            backward(Node([1.0, 2.0]))

    def test_accumulation_without_zeroing(self):
        a = Node([1.0, 2.0])
        backward(ad.sum_all(a))
        backward(ad.sum_all(a))
        np.testing.assert_array_equal(a.grad, [2.0, 2.0])

    def test_small_mlp_matches_finite_differences(self):
        rng = np.random.default_rng(11)
        w1, b1 = Node(rng.normal(size=(4, 2)) * 0.5), Node(rng.normal(size=2))
        w2, b2 = Node(rng.normal(size=(2, 3)) * 0.5), Node(rng.normal(size=3))
        x = rng.normal(size=(5, 4))

        def loss_fn():
            h = ad.relu(ad.add_bias(ad.matmul(Node(x), w1), b1))
            out = ad.softmax_rows(ad.add_bias(ad.matmul(h, w2), b2))
            return ad.mean_all(ad.affine(ad.log(ad.clamp_min(out, 1e-12)), -1.0))

        assert_grads_close(loss_fn, [w1, b1, w2, b2], atol=1e-6, rtol=1e-4)


class TestFiniteness:
    def test_nan_raises(self):
        with pytest.raises(NumericError):
            ad.log(Node([-1.0]))

    def test_inf_raises(self):
        with pytest.raises(NumericError):
            Node([np.inf])
