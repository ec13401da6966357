import numpy as np
import pytest

import tridepth.autodiff as ad
from tridepth.autodiff import Tape, Tensor, finite_diff_check


def grad_of(f, x):
    leaf = Tensor(np.asarray(x, dtype=np.float64), requires_grad=True)
    with Tape() as tape:
        y = f(leaf)
    return tape.backward(y).of(leaf)


class TestPointwise:
    def test_sigmoid_zero(self):
        assert float(ad.sigmoid(Tensor(0.0)).data) == 0.5

    def test_mean(self):
        assert float(ad.mean(Tensor([1.0, 2.0, 3.0, 4.0])).data) == 2.5

    def test_grad_mean_square(self):
        g = grad_of(lambda t: ad.mean(t * t), [1.0, 2.0])
        np.testing.assert_allclose(g, [1.0, 2.0], rtol=0, atol=0)

    def test_log_nonpositive_raises(self):
        with pytest.raises(ValueError, match="positive"):
            ad.log(Tensor([1.0, 0.0]))

    def test_no_silent_nan(self):
        with pytest.raises(FloatingPointError):
            ad.div(Tensor([1.0]), Tensor([0.0]))

    def test_elu_negative_branch(self):
        out = ad.elu(Tensor([-1.0, 0.0, 2.0], dtype=np.float64))
        np.testing.assert_allclose(out.data, [np.expm1(-1.0), 0.0, 2.0])

    def test_clamp_boundary_subgradient(self):
        g = grad_of(lambda t: ad.sum_(ad.clamp(t, 0.0, 1.0)),
                    [-0.5, 0.0, 0.5, 1.0, 1.5])
        np.testing.assert_array_equal(g, [0.0, 1.0, 1.0, 1.0, 0.0])


class TestBackward:
    def test_sum_gradient_ones(self):
        g = grad_of(lambda t: ad.sum_(t), np.ones((2, 3, 4)))
        np.testing.assert_array_equal(g, np.ones((2, 3, 4)))

    def test_minimum_gradient_zero(self):
        y = np.array([1.0, 2.0, 3.0])
        g = grad_of(lambda t: ad.mean((t - y) * (t - y)), y)
        np.testing.assert_array_equal(g, np.zeros(3))

    def test_non_scalar_root_raises(self):
        leaf = Tensor(np.ones(3), requires_grad=True)
        with Tape() as tape:
            y = leaf * 2.0
        with pytest.raises(ValueError, match="scalar"):
            tape.backward(y)

    def test_unreachable_leaf_reads_zero(self):
        a = Tensor(np.ones(2), requires_grad=True)
        b = Tensor(np.ones(2), requires_grad=True)
        with Tape() as tape:
            y = ad.sum_(a * a)
        g = tape.backward(y)
        np.testing.assert_array_equal(g.of(b), np.zeros(2))

    def test_backward_twice_identical(self):
        leaf = Tensor(np.linspace(0.1, 1.0, 6), requires_grad=True)
        with Tape() as tape:
            y = ad.mean(ad.exp(leaf) * leaf)
        g1 = tape.backward(y).of(leaf)
        g2 = tape.backward(y).of(leaf)
        np.testing.assert_array_equal(g1, g2)

    def test_tapes_do_not_nest(self):
        with Tape():
            with pytest.raises(RuntimeError, match="active"):
                with Tape():
                    pass


class TestConv2d:
    def test_hand_sum(self):
        x = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 1, 2, 2))
        k = Tensor(np.ones((1, 1, 2, 2)))
        out = ad.conv2d(x, k, stride=1, padding=0)
        np.testing.assert_array_equal(out.data, [[[[10.0]]]])

    def test_identity_kernel(self):
        rng = np.random.default_rng(0)
        x = Tensor(rng.normal(size=(2, 1, 5, 7)))
        k = Tensor(np.ones((1, 1, 1, 1)))
        out = ad.conv2d(x, k, stride=1, padding=0)
        np.testing.assert_array_equal(out.data, x.data)

    def test_output_extent_formula(self):
        x = Tensor(np.zeros((1, 3, 10, 12)))
        k = Tensor(np.zeros((5, 3, 3, 3)))
        out = ad.conv2d(x, k, stride=2, padding=1)
        assert out.data.shape == (1, 5, 5, 6)

    def test_channel_mismatch_names_dimension(self):
        with pytest.raises(ValueError, match="channel"):
            ad.conv2d(Tensor(np.zeros((1, 3, 4, 4))),
                      Tensor(np.zeros((2, 4, 3, 3))))

    def test_kernel_exceeds_extents(self):
        with pytest.raises(ValueError, match="exceeds"):
            ad.conv2d(Tensor(np.zeros((1, 1, 2, 2))),
                      Tensor(np.zeros((1, 1, 5, 5))))

    def test_gradient_vs_finite_differences(self):
        rng = np.random.default_rng(1)
        k = Tensor(rng.normal(size=(2, 3, 3, 3)))
        x = Tensor(rng.normal(size=(1, 3, 5, 6)))
        err = finite_diff_check(
            lambda t: ad.sum_(ad.conv2d(t, k, stride=1, padding=1)), x, 1e-5)
        assert err < 1e-4


class TestUpsample2x:
    def test_constant_preserved(self):
        out = ad.upsample2x(Tensor(np.full((1, 1, 3, 4), 7.0)))
        assert out.data.shape == (1, 1, 6, 8)
        np.testing.assert_array_equal(out.data, np.full((1, 1, 6, 8), 7.0))

    def test_two_pixel_row(self):
        out = ad.upsample2x(Tensor(np.array([[0.0, 2.0]]).reshape(1, 1, 1, 2)))
        np.testing.assert_allclose(out.data[0, 0, 0], [0.0, 0.5, 1.5, 2.0])
        np.testing.assert_allclose(out.data[0, 0, 1], [0.0, 0.5, 1.5, 2.0])

    def test_gradient_vs_finite_differences(self):
        rng = np.random.default_rng(2)
        x = Tensor(rng.normal(size=(1, 2, 3, 4)))
        err = finite_diff_check(
            lambda t: ad.mean(ad.upsample2x(t) * ad.upsample2x(t)), x, 1e-5)
        assert err < 1e-4


class TestFiniteDiffCheck:
    def test_sum_near_zero_error(self):
        x = Tensor(np.random.default_rng(3).normal(size=(3, 3)))
        assert finite_diff_check(ad.sum_, x, 1e-5) < 1e-9

    def test_mean_square_spec_case(self):
        x = Tensor(np.array([1.0, 2.0, 3.0]))
        err = finite_diff_check(lambda t: ad.mean(t * t), x, 1e-5)
        assert err < 1e-6

    def test_clamp_away_from_knots(self):
        x = Tensor(np.array([0.3, 0.6, 1.4]))
        err = finite_diff_check(
            lambda t: ad.mean(ad.clamp(t, 0.0, 1.0) * t), x, 1e-5)
        assert err < 1e-4

    def test_eps_must_be_positive(self):
        with pytest.raises(ValueError):
            finite_diff_check(ad.sum_, Tensor(np.ones(2)), 0.0)


class TestDeterminism:
    def test_forward_replay_bit_identical(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(1, 2, 6, 6)).astype(np.float32)
        k = rng.normal(size=(3, 2, 3, 3)).astype(np.float32)

        def run():
            out = ad.conv2d(Tensor(x), Tensor(k), stride=1, padding=1)
            return ad.box_mean3(ad.sigmoid(out)).data

        a, b = run(), run()
        assert a.tobytes() == b.tobytes()

    def test_primitive_suite_many_seeds(self):
        # every registered primitive, >= 20 seeds, 64-bit, rel err < 1e-4
        from tridepth.gradcheck import run_gradcheck
        for seed in range(20):
            report = run_gradcheck(precision=64, seed=seed)
            assert report.max_err < 1e-4, report.lines
