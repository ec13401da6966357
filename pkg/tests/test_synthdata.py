import numpy as np
import pytest

from tridepth.synthdata import (SceneSpec, generate_dataset, generate_scene,
                                load_dataset, load_scene, save_scene,
                                scene_dir, to_binocular)


def warp_errors(center, side, gt, occ, direction):
    """|I^c(x) - I^side(x + direction*d)| over non-occluded pixels."""
    H, W = gt.shape
    xs = np.arange(W)[None, :]
    pos = np.rint(xs + direction * gt).astype(int)
    ok = ~occ & (pos >= 0) & (pos <= W - 1)
    rows = np.arange(H)[:, None]
    pos = np.clip(pos, 0, W - 1)
    diff = np.abs(center - side[:, rows, pos])
    return diff[:, ok]


class TestGenerate:
    def test_gt_cl_equals_gt_cr(self):
        sample = generate_scene(SceneSpec(), seed=0)
        assert sample.gt_cl.tobytes() == sample.gt_cr.tobytes()

    def test_shapes_ranges(self):
        spec = SceneSpec()
        s = generate_scene(spec, seed=1)
        assert s.ic.shape == (3, spec.height, spec.width)
        assert s.gt_cl.shape == (spec.height, spec.width)
        assert s.occ_l.dtype == bool
        assert np.all(s.ic >= 0) and np.all(s.ic <= 1)
        assert np.all(s.gt_cl >= spec.d_min - 1)  # integer snap of d_min
        assert np.all(s.gt_cl <= spec.d_max)

    def test_determinism(self):
        a = generate_scene(SceneSpec(noise_amplitude=0.01), seed=7)
        b = generate_scene(SceneSpec(noise_amplitude=0.01), seed=7)
        for name in ("il", "ic", "ir", "gt_cl", "gt_cr", "occ_l", "occ_r"):
            assert getattr(a, name).tobytes() == getattr(b, name).tobytes()
        c = generate_scene(SceneSpec(noise_amplitude=0.01), seed=8)
        assert a.ic.tobytes() != c.ic.tobytes()

    def test_single_plane(self):
        spec = SceneSpec(num_layers=1)
        s = generate_scene(spec, seed=3)
        d = s.gt_cl[0, 0]
        assert np.all(s.gt_cl == d)
        W = spec.width
        # only the border band is occluded: columns past W-1-d in the left view
        xs = np.arange(W)[None, :]
        np.testing.assert_array_equal(s.occ_l, np.broadcast_to(
            xs + d > W - 1, s.occ_l.shape))
        np.testing.assert_array_equal(s.occ_r, np.broadcast_to(
            xs - d < 0, s.occ_r.shape))

    def test_warp_consistency_noise_free(self):
        s = generate_scene(SceneSpec(), seed=5)
        assert warp_errors(s.ic, s.il, s.gt_cl, s.occ_l, +1).max() == 0.0
        assert warp_errors(s.ic, s.ir, s.gt_cr, s.occ_r, -1).max() == 0.0

    def test_warp_consistency_under_noise(self):
        amp = 0.02
        s = generate_scene(SceneSpec(noise_amplitude=amp), seed=5)
        assert warp_errors(s.ic, s.il, s.gt_cl, s.occ_l, +1).mean() < 2 * amp

    def test_two_layer_occlusion_band_width(self):
        s = generate_scene(SceneSpec(num_layers=2), seed=2)
        levels = np.unique(s.gt_cl)
        assert len(levels) == 2
        d_b, d_f = levels
        width = int(d_f - d_b)
        assert width >= 1
        H, W = s.gt_cl.shape
        fg_rows = np.where((s.gt_cl == d_f).any(axis=1))[0]
        row = fg_rows[len(fg_rows) // 2]
        right_edge = np.where(s.gt_cl[row] == d_f)[0][-1]
        band = np.arange(right_edge + 1, right_edge + 1 + width)
        band = band[band <= W - 1 - int(d_b)]  # stay off the border band
        assert band.size
        assert np.all(s.occ_l[row, band])
        after = right_edge + 1 + width
        if after <= W - 1 - int(d_b):
            assert not s.occ_l[row, after]

    def test_reflection_commutes(self):
        s = generate_scene(SceneSpec(), seed=9)
        # mirrored sample: sides swap roles, disparities keep their sign
        ic_m = s.ic[:, :, ::-1]
        il_m = s.ir[:, :, ::-1]
        ir_m = s.il[:, :, ::-1]
        gt_m = s.gt_cl[:, ::-1]
        occ_l_m = s.occ_r[:, ::-1]
        occ_r_m = s.occ_l[:, ::-1]
        assert warp_errors(ic_m, il_m, gt_m, occ_l_m, +1).max() == 0.0
        assert warp_errors(ic_m, ir_m, gt_m, occ_r_m, -1).max() == 0.0

    def test_subpixel_mode(self):
        s = generate_scene(SceneSpec(subpixel=True), seed=4)
        frac = s.gt_cl - np.floor(s.gt_cl)
        assert np.any(frac > 0)

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            SceneSpec(d_min=0.0)
        with pytest.raises(ValueError):
            SceneSpec(height=60)
        with pytest.raises(ValueError):
            SceneSpec(d_max=200.0)


class TestBinocular:
    def test_modes_share_center(self):
        s = generate_scene(SceneSpec(), seed=0)
        left_lc, right_lc = to_binocular(s, "lc")
        left_cr, right_cr = to_binocular(s, "cr")
        assert right_lc.tobytes() == left_cr.tobytes() == s.ic.tobytes()
        assert left_lc.tobytes() == s.il.tobytes()
        assert right_cr.tobytes() == s.ir.tobytes()

    def test_copies_not_views(self):
        s = generate_scene(SceneSpec(), seed=0)
        left, _ = to_binocular(s, "lc")
        left[...] = 0.0
        assert s.il.any()

    def test_bad_mode(self):
        s = generate_scene(SceneSpec(), seed=0)
        with pytest.raises(ValueError, match="mode"):
            to_binocular(s, "rl")


class TestStorage:
    def test_round_trip(self, tmp_path):
        s = generate_scene(SceneSpec(num_layers=3), seed=6)
        path = str(tmp_path / "scene")
        save_scene(s, path)
        back = load_scene(path)
        # float ground truth and masks are bit-exact; images re-quantize
        assert back.gt_cl.tobytes() == s.gt_cl.tobytes()
        assert back.gt_cr.tobytes() == s.gt_cr.tobytes()
        np.testing.assert_array_equal(back.occ_l, s.occ_l)
        np.testing.assert_array_equal(back.occ_r, s.occ_r)
        for name in ("il", "ic", "ir"):
            np.testing.assert_array_equal(
                getattr(back, name),
                np.float32(np.rint(getattr(s, name) * 255.0) / 255.0))
        assert back.spec == s.spec
        assert back.camera == s.camera

    def test_dataset_layout_and_load(self, tmp_path):
        root = str(tmp_path)
        generate_dataset(SceneSpec(), 2, seed=0, root=root)
        assert (tmp_path / "scene_000000" / "ic.ppm").exists()
        assert (tmp_path / "scene_000001" / "gt_cr.pfm").exists()
        scenes = load_dataset(root)
        assert len(scenes) == 2
        reference = generate_scene(SceneSpec(), 1)
        assert scenes[1].gt_cl.tobytes() == reference.gt_cl.tobytes()

    def test_empty_root(self, tmp_path):
        with pytest.raises(ValueError, match="scene_"):
            load_dataset(str(tmp_path))

    def test_scene_dir_format(self):
        assert scene_dir("/data", 7).endswith("scene_000007")
