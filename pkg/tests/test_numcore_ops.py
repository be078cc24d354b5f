"""Forward/backward checks for the tensor engine.

Every differentiable op is validated against central finite differences
(h = 1e-5, float64). The numerical oracle re-runs the forward pass from
perturbed inputs, so it never touches the backward code it checks.
"""

import numpy as np
import pytest

from mcvi import numcore as nc
from mcvi.numcore.gradcheck import max_rel_error


def rand(shape, seed=0, scale=1.0):
    return np.random.default_rng(seed).normal(scale=scale, size=shape)


class TestElementwise:
    def test_add_mul_grads(self):
        a = nc.Tensor(rand((3, 4), 1), requires_grad=True)
        b = nc.Tensor(rand((3, 4), 2), requires_grad=True)
        err = max_rel_error(lambda: ((a + b) * a).sum(), [a, b])
        assert err < 1e-4

    def test_broadcast_grads(self):
        x = nc.Tensor(rand((2, 3, 4, 4), 3), requires_grad=True)
        s = nc.Tensor(rand((1, 3, 1, 1), 4), requires_grad=True)
        err = max_rel_error(lambda: ((x * s + s) * (x * s + s)).sum(), [x, s])
        assert err < 1e-4

    def test_div_pow_sqrt_grads(self):
        a = nc.Tensor(np.abs(rand((5,), 5)) + 0.5, requires_grad=True)
        b = nc.Tensor(np.abs(rand((5,), 6)) + 0.5, requires_grad=True)
        err = max_rel_error(lambda: ((a / b) ** 3 + a.sqrt()).sum(), [a, b])
        assert err < 1e-4

    def test_exp_log_grads(self):
        a = nc.Tensor(np.abs(rand((6,), 7)) + 0.2, requires_grad=True)
        err = max_rel_error(lambda: (a.exp() * a.log()).sum(), [a])
        assert err < 1e-4

    def test_mean_axis_grads(self):
        x = nc.Tensor(rand((2, 3, 4), 8), requires_grad=True)
        err = max_rel_error(lambda: (x.mean(axis=(0, 2)) ** 2).sum(), [x])
        assert err < 1e-4

    def test_matmul_transpose_grads(self):
        a = nc.Tensor(rand((4, 3), 9), requires_grad=True)
        b = nc.Tensor(rand((3, 5), 10), requires_grad=True)
        err = max_rel_error(lambda: ((a @ b).transpose2d() ** 2).sum(), [a, b])
        assert err < 1e-4

    def test_concat_grads(self):
        a = nc.Tensor(rand((2, 3), 11), requires_grad=True)
        b = nc.Tensor(rand((2, 2), 12), requires_grad=True)
        err = max_rel_error(lambda: (nc.concat([a, b], axis=1) ** 2).sum(), [a, b])
        assert err < 1e-4

    def test_reshape_roundtrip(self):
        x = nc.Tensor(rand((2, 6), 13), requires_grad=True)
        y = x.reshape(3, 4).reshape(2, 6)
        assert np.array_equal(y.data, x.data)
        err = max_rel_error(lambda: (x.reshape(12) ** 2).sum(), [x])
        assert err < 1e-4


class TestActivations:
    def test_fixed_points(self):
        z = nc.Tensor(np.zeros(3))
        assert np.allclose(nc.sigmoid(z).data, 0.5)
        assert np.allclose(nc.tanh(z).data, 0.0)
        assert nc.mish(nc.Tensor(np.array([0.0]))).data[0] == 0.0

    def test_mish_keeps_negative_inputs(self):
        # -20 maps to a tiny negative number, not zero
        v = nc.mish(nc.Tensor(np.array([-20.0]))).data[0]
        assert -1e-7 < v < 0.0

    def test_mish_overflow_safe(self):
        big = nc.mish(nc.Tensor(np.array([1000.0]))).data[0]
        assert np.isfinite(big) and abs(big - 1000.0) < 1e-6

    def test_mish_grad_at_reference_points(self):
        x = nc.Tensor(np.array([-5.0, -1.0, 0.0, 1.0, 5.0]), requires_grad=True)
        err = max_rel_error(lambda: nc.mish(x).sum(), [x])
        assert err < 1e-4

    @pytest.mark.parametrize("kind", ["relu", "sigmoid", "tanh", "mish"])
    def test_activation_grads(self, kind):
        # offset away from the relu kink so the FD probe is clean
        x = nc.Tensor(rand((4, 5), 20) + 0.05, requires_grad=True)
        err = max_rel_error(lambda: (nc.activation(kind, x) ** 2).sum(), [x])
        assert err < 1e-4

    def test_unknown_activation(self):
        with pytest.raises(ValueError):
            nc.activation("gelu", nc.Tensor(np.zeros(2)))


class TestLinearAndPooling:
    def test_linear_grad_8x16(self):
        x = nc.Tensor(rand((3, 16), 30), requires_grad=True)
        w = nc.Tensor(rand((8, 16), 31, scale=0.3), requires_grad=True)
        b = nc.Tensor(rand((8,), 32), requires_grad=True)
        err = max_rel_error(lambda: (nc.linear(x, w, b) ** 2).sum(), [x, w, b])
        assert err < 1e-4

    def test_linear_shape_mismatch(self):
        with pytest.raises(ValueError):
            nc.linear(nc.Tensor(np.zeros((2, 3))), nc.Tensor(np.zeros((4, 5))))

    def test_constant_channel_pools_to_value(self):
        x = np.zeros((2, 3, 4, 4))
        x[:, 0], x[:, 1], x[:, 2] = 1.5, -0.25, 7.0
        pooled = nc.adaptive_avg_pool_1x1(nc.Tensor(x))
        assert pooled.shape == (2, 3, 1, 1)
        assert np.allclose(pooled.data[:, :, 0, 0], [[1.5, -0.25, 7.0]] * 2)

    def test_gap_grads(self):
        x = nc.Tensor(rand((2, 3, 4, 5), 33), requires_grad=True)
        err = max_rel_error(lambda: (nc.global_avg_pool(x) ** 2).sum(), [x])
        assert err < 1e-4


class TestConv2d:
    def test_one_by_one_identity_kernel(self):
        x = nc.Tensor(rand((2, 3, 5, 5), 40))
        w = nc.Tensor(np.eye(3).reshape(3, 3, 1, 1))
        y = nc.conv2d(x, w, stride=1, padding=0)
        assert np.array_equal(y.data, x.data)

    def test_zero_weight_zero_output(self):
        x = nc.Tensor(rand((1, 2, 4, 4), 41))
        w = nc.Tensor(np.zeros((5, 2, 3, 3)))
        b = nc.Tensor(np.zeros(5))
        y = nc.conv2d(x, w, b, stride=1, padding=1)
        assert y.shape == (1, 5, 4, 4)
        assert np.all(y.data == 0.0)

    def test_grad_small_case(self):
        # quadratic loss makes the central difference exact to rounding,
        # so the tight 1e-6 bar is meaningful here
        x = nc.Tensor(rand((1, 3, 4, 4), 42), requires_grad=True)
        w = nc.Tensor(rand((2, 3, 3, 3), 43, scale=0.5), requires_grad=True)
        b = nc.Tensor(rand((2,), 44), requires_grad=True)
        err = max_rel_error(lambda: (nc.conv2d(x, w, b, stride=1, padding=1) ** 2).sum(),
                            [x, w, b])
        assert err < 1e-6

    def test_grad_stride2_no_padding(self):
        x = nc.Tensor(rand((2, 2, 6, 6), 45), requires_grad=True)
        w = nc.Tensor(rand((3, 2, 3, 3), 46, scale=0.5), requires_grad=True)
        err = max_rel_error(lambda: (nc.conv2d(x, w, stride=2, padding=0) ** 2).sum(), [x, w])
        assert err < 1e-4

    def test_channel_mismatch(self):
        with pytest.raises(ValueError):
            nc.conv2d(nc.Tensor(np.zeros((1, 3, 4, 4))), nc.Tensor(np.zeros((2, 4, 3, 3))))


class TestDepthwiseConv2d:
    def test_center_one_kernels_identity(self):
        x = nc.Tensor(rand((2, 4, 6, 6), 50))
        w = np.zeros((4, 1, 3, 3))
        w[:, 0, 1, 1] = 1.0
        y = nc.depthwise_conv2d(x, nc.Tensor(w))
        assert np.allclose(y.data, x.data)

    def test_channel_separability(self):
        base = rand((1, 3, 5, 5), 51)
        w = nc.Tensor(rand((3, 1, 3, 3), 52, scale=0.5))
        y0 = nc.depthwise_conv2d(nc.Tensor(base), w).data
        bumped = base.copy()
        bumped[0, 0] += rand((5, 5), 53)
        y1 = nc.depthwise_conv2d(nc.Tensor(bumped), w).data
        assert not np.allclose(y0[0, 0], y1[0, 0])
        assert np.array_equal(y0[0, 1:], y1[0, 1:])

    def test_grads(self):
        x = nc.Tensor(rand((2, 3, 5, 5), 54), requires_grad=True)
        w = nc.Tensor(rand((3, 1, 3, 3), 55, scale=0.5), requires_grad=True)
        b = nc.Tensor(rand((3,), 56), requires_grad=True)
        err = max_rel_error(lambda: (nc.depthwise_conv2d(x, w, b) ** 2).sum(), [x, w, b])
        assert err < 1e-4

    def test_channel_count_mismatch(self):
        with pytest.raises(ValueError):
            nc.depthwise_conv2d(nc.Tensor(np.zeros((1, 3, 4, 4))),
                                nc.Tensor(np.zeros((2, 1, 3, 3))))


class TestBatchNorm:
    def _fresh(self, c):
        gamma = nc.Tensor(np.ones(c), requires_grad=True)
        beta = nc.Tensor(np.zeros(c), requires_grad=True)
        return gamma, beta, np.zeros(c), np.ones(c)

    def test_train_mode_normalizes(self):
        x = nc.Tensor(rand((4, 3, 5, 5), 60) * 3 + 1)
        gamma, beta, rm, rv = self._fresh(3)
        y = nc.batch_norm(x, gamma, beta, rm, rv, training=True)
        assert np.allclose(y.data.mean(axis=(0, 2, 3)), 0.0, atol=1e-6)
        assert np.allclose(y.data.var(axis=(0, 2, 3)), 1.0, atol=1e-4)

    def test_eval_identity_with_unit_stats(self):
        x = nc.Tensor(rand((3, 2, 4, 4), 61))
        gamma, beta, rm, rv = self._fresh(2)
        y = nc.batch_norm(x, gamma, beta, rm, rv, training=False, eps=0.0)
        assert np.array_equal(y.data, x.data)

    def test_running_stats_update(self):
        x = nc.Tensor(rand((8, 2, 3, 3), 62) + 2.0)
        gamma, beta, rm, rv = self._fresh(2)
        nc.batch_norm(x, gamma, beta, rm, rv, training=True, momentum=0.1)
        expect_m = 0.1 * x.data.mean(axis=(0, 2, 3))
        assert np.allclose(rm, expect_m)
        assert not np.allclose(rv, 1.0)

    def test_batch_of_one_rejected_in_train(self):
        gamma, beta, rm, rv = self._fresh(2)
        with pytest.raises(ValueError):
            nc.batch_norm(nc.Tensor(np.zeros((1, 2, 3, 3))), gamma, beta, rm, rv,
                          training=True)

    def test_train_grads_4x3x5x5(self):
        x = nc.Tensor(rand((4, 3, 5, 5), 63), requires_grad=True)
        gamma = nc.Tensor(rand((3,), 64) * 0.2 + 1.0, requires_grad=True)
        beta = nc.Tensor(rand((3,), 65) * 0.2, requires_grad=True)
        rm, rv = np.zeros(3), np.ones(3)
        # a random target keeps the loss sensitive to x; sum(bn(x)^2) alone
        # is invariant to x up to eps leakage and would only probe noise
        target = rand((4, 3, 5, 5), 99)

        def loss():
            rm_, rv_ = rm.copy(), rv.copy()  # keep buffers fixed across FD probes
            y = nc.batch_norm(x, gamma, beta, rm_, rv_, training=True)
            return ((y - nc.Tensor(target)) ** 2).sum()

        assert max_rel_error(loss, [x, gamma, beta]) < 1e-4

    def test_eval_grads(self):
        x = nc.Tensor(rand((2, 3, 4, 4), 66), requires_grad=True)
        gamma = nc.Tensor(np.ones(3) * 1.3, requires_grad=True)
        beta = nc.Tensor(np.zeros(3) + 0.1, requires_grad=True)
        rm, rv = rand((3,), 67) * 0.1, np.abs(rand((3,), 68)) + 0.5
        err = max_rel_error(
            lambda: (nc.batch_norm(x, gamma, beta, rm, rv, training=False) ** 2).sum(),
            [x, gamma, beta])
        assert err < 1e-4

    def test_2d_input(self):
        x = nc.Tensor(rand((6, 5), 69), requires_grad=True)
        gamma = nc.Tensor(np.ones(5), requires_grad=True)
        beta = nc.Tensor(np.zeros(5), requires_grad=True)
        rm, rv = np.zeros(5), np.ones(5)
        y = nc.batch_norm(x, gamma, beta, rm, rv, training=True)
        assert np.allclose(y.data.mean(axis=0), 0.0, atol=1e-8)
        target = rand((6, 5), 98)

        def loss():
            y = nc.batch_norm(x, gamma, beta, rm.copy(), rv.copy(), training=True)
            return ((y - nc.Tensor(target)) ** 2).sum()

        assert max_rel_error(loss, [x, gamma, beta]) < 1e-4


class TestBackwardSemantics:
    def test_sum_grad_is_ones(self):
        x = nc.Tensor(rand((3, 4), 70), requires_grad=True)
        x.sum().backward()
        assert np.array_equal(x.grad, np.ones((3, 4)))

    def test_square_grad_is_2x(self):
        x = nc.Tensor(rand((5,), 71), requires_grad=True)
        (x * x).sum().backward()
        assert np.allclose(x.grad, 2 * x.data)

    def test_non_scalar_loss_rejected(self):
        x = nc.Tensor(rand((3,), 72), requires_grad=True)
        with pytest.raises(ValueError):
            (x * x).backward()

    def test_gradients_accumulate(self):
        x = nc.Tensor(rand((4,), 73), requires_grad=True)
        x.sum().backward()
        x.sum().backward()
        assert np.allclose(x.grad, 2.0)

    def test_shared_tensor_composes(self):
        x = nc.Tensor(np.array([2.0]), requires_grad=True)
        # y = x*x + 3x -> dy/dx = 2x + 3 = 7
        ((x * x) + (x * 3.0)).sum().backward()
        assert np.allclose(x.grad, 7.0)

    def test_unreached_tensor_untouched(self):
        x = nc.Tensor(rand((3,), 74), requires_grad=True)
        y = nc.Tensor(rand((3,), 75), requires_grad=True)
        (x * x).sum().backward()
        assert y.grad is None

    def test_no_grad_builds_no_graph(self):
        x = nc.Tensor(rand((3,), 76), requires_grad=True)
        with nc.no_grad():
            y = (x * x).sum()
        assert not y.requires_grad
        assert y._backward_fn is None


class TestEngineInvariants:
    def test_nonfinite_forward_raises(self):
        x = nc.Tensor(np.array([1.0, 0.0]))
        with np.errstate(divide="ignore"):
            with pytest.raises(nc.NonFiniteError):
                nc.Tensor(np.array([1.0])) / x  # 1/0 -> inf

    def test_nonfinite_constructor_raises(self):
        with pytest.raises(nc.NonFiniteError):
            nc.Tensor(np.array([np.nan]))

    def test_same_seed_bit_identical(self):
        def run(seed):
            rng = np.random.default_rng(seed)
            x = nc.Tensor(rng.normal(size=(2, 3, 6, 6)), requires_grad=True)
            w = nc.Tensor(rng.normal(scale=0.3, size=(4, 3, 3, 3)), requires_grad=True)
            out = nc.conv2d(x, w, stride=1, padding=1)
            (out ** 2).sum().backward()
            return out.data.tobytes(), w.grad.tobytes()

        assert run(123) == run(123)

    def test_finite_forward_on_finite_inputs(self):
        rng = np.random.default_rng(77)
        x = nc.Tensor(rng.normal(size=(2, 4, 8, 8)), requires_grad=True)
        w = nc.Tensor(rng.normal(scale=0.2, size=(4, 1, 3, 3)), requires_grad=True)
        y = nc.mish(nc.depthwise_conv2d(x, w))
        assert np.isfinite(y.data).all()
