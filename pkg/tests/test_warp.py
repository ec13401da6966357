import numpy as np
import pytest

import tridepth.autodiff as ad
from tridepth.autodiff import Tensor, finite_diff_check
from tridepth.warp import (VIEW_TAGS, DisparityMap, build_pyramid,
                           sample_along_rows)


def row_image(values):
    return Tensor(np.asarray(values, dtype=np.float64).reshape(1, 1, 1, -1))


class TestSampler:
    def test_zero_disparity_identity(self):
        rng = np.random.default_rng(0)
        src = Tensor(rng.uniform(size=(2, 3, 4, 8)))
        disp = Tensor(np.zeros((2, 1, 4, 8)))
        for sign in (1, -1):
            out = sample_along_rows(src, disp, sign)
            np.testing.assert_array_equal(out.data, src.data)

    def test_integer_shift_with_border_clamp(self):
        out = sample_along_rows(row_image([1, 2, 3, 4]),
                                Tensor(np.ones((1, 1, 1, 4))), -1)
        np.testing.assert_array_equal(out.data[0, 0, 0], [1, 1, 2, 3])

    def test_bilinear_midpoint(self):
        out = sample_along_rows(row_image([1, 2, 3, 4]),
                                Tensor(np.full((1, 1, 1, 4), 0.5)), -1)
        np.testing.assert_allclose(out.data[0, 0, 0], [1, 1.5, 2.5, 3.5])

    def test_constant_shift_interior_oracle(self):
        rng = np.random.default_rng(1)
        src = rng.uniform(size=(1, 1, 2, 16))
        out = sample_along_rows(Tensor(src), Tensor(np.full((1, 1, 2, 16), 3.0)), 1)
        np.testing.assert_allclose(out.data[..., :13], src[..., 3:])

    def test_negative_disparity_rejected(self):
        with pytest.raises(ValueError, match="negative"):
            sample_along_rows(row_image([1, 2, 3]),
                              Tensor(np.full((1, 1, 1, 3), -0.5)), 1)

    def test_bad_sign_rejected(self):
        with pytest.raises(ValueError, match="sign"):
            sample_along_rows(row_image([1, 2, 3]),
                              Tensor(np.zeros((1, 1, 1, 3))), 2)

    def test_extent_mismatch_rejected(self):
        with pytest.raises(ValueError, match="extents"):
            sample_along_rows(Tensor(np.zeros((1, 1, 2, 4))),
                              Tensor(np.zeros((1, 1, 2, 5))), 1)

    def test_rows_independent(self):
        rng = np.random.default_rng(2)
        src = rng.uniform(size=(1, 1, 4, 8))
        disp = Tensor(rng.uniform(0.2, 2.2, size=(1, 1, 4, 8)))
        base = sample_along_rows(Tensor(src), disp, -1).data
        bumped = src.copy()
        bumped[0, 0, 2] += 1.0
        out = sample_along_rows(Tensor(bumped), disp, -1).data
        np.testing.assert_array_equal(out[0, 0, [0, 1, 3]], base[0, 0, [0, 1, 3]])
        assert np.any(out[0, 0, 2] != base[0, 0, 2])

    @pytest.mark.parametrize("sign", [1, -1])
    def test_gradients_vs_finite_differences(self, sign):
        rng = np.random.default_rng(3)
        src = Tensor(rng.uniform(size=(1, 2, 3, 8)))
        disp = Tensor(rng.uniform(0.2, 1.8, size=(1, 1, 3, 8)))
        err_d = finite_diff_check(
            lambda t: ad.mean(sample_along_rows(src, t, sign)
                              * sample_along_rows(src, t, sign)), disp, 1e-6)
        err_s = finite_diff_check(
            lambda t: ad.mean(sample_along_rows(t, disp, sign) * 2.0), src, 1e-6)
        assert err_d < 1e-5 and err_s < 1e-5


class TestTags:
    def test_view_tags(self):
        assert VIEW_TAGS == ("cl", "lc", "cr", "rc")

    def test_disparity_map_defaults(self):
        d = DisparityMap(Tensor(np.zeros((1, 1, 2, 2))), tag="cl")
        assert d.level == 0


class TestPyramid:
    def test_constant_all_levels(self):
        pyr = build_pyramid(Tensor(np.full((1, 3, 16, 16), 0.25)), levels=4)
        for level in pyr:
            np.testing.assert_array_equal(level.data,
                                          np.full(level.data.shape, 0.25))

    def test_mean_pooling_hand_case(self):
        img = Tensor(np.array([[0.0, 0.0], [4.0, 4.0]]).reshape(1, 1, 2, 2))
        pyr = build_pyramid(img, levels=2)
        assert float(pyr[1].data[0, 0, 0, 0]) == 2.0

    def test_paper_extents(self):
        pyr = build_pyramid(Tensor(np.zeros((1, 3, 64, 128))), levels=4)
        extents = [level.data.shape[-2:] for level in pyr]
        assert extents == [(64, 128), (32, 64), (16, 32), (8, 16)]

    def test_too_many_levels_rejected(self):
        with pytest.raises(ValueError):
            build_pyramid(Tensor(np.zeros((1, 1, 8, 8))), levels=5)

    def test_odd_extent_rejected(self):
        with pytest.raises(ValueError):
            build_pyramid(Tensor(np.zeros((1, 1, 6, 7))), levels=2)
