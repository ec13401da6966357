import csv

import numpy as np
import pytest

from tridepth.metrics import (CameraModel, MetricsRecord, aggregate, d1_all,
                              depth_metrics, disparity_to_depth, write_csv)


class TestConversion:
    def test_reference_value(self):
        cam = CameraModel(focal=200.0, baseline=0.5)
        depth, valid = disparity_to_depth(np.array([4.0]), cam)
        assert depth[0] == 25.0
        assert valid[0]

    def test_non_positive_invalid(self):
        cam = CameraModel(focal=100.0, baseline=1.0)
        depth, valid = disparity_to_depth(np.array([0.0, -1.0, 2.0]), cam)
        np.testing.assert_array_equal(valid, [False, False, True])
        np.testing.assert_array_equal(depth, [0.0, 0.0, 50.0])

    def test_camera_validation(self):
        with pytest.raises(ValueError, match="positive"):
            CameraModel(focal=0.0, baseline=1.0)
        with pytest.raises(ValueError, match="positive"):
            CameraModel(focal=100.0, baseline=-2.0)


class TestDepthMetrics:
    def test_hand_case(self):
        pred = np.array([12.0, 25.0])
        gt = np.array([10.0, 20.0])
        rec = depth_metrics(pred, gt)
        # errors 2 and 5 on ground truths 10 and 20
        assert np.isclose(rec.abs_rel, 0.225, rtol=1e-12)
        assert np.isclose(rec.sq_rel, 0.825, rtol=1e-12)
        assert np.isclose(rec.rmse, np.sqrt(14.5), rtol=1e-12)
        assert np.isclose(
            rec.rmse_log,
            np.sqrt((np.log(1.2) ** 2 + np.log(1.25) ** 2) / 2), rtol=1e-12)
        assert rec.delta1 == 0.5  # ratio 1.25 fails the strict '<'
        assert rec.valid_count == 2

    def test_cap_masks_gt(self):
        pred = np.array([12.0, 25.0])
        gt = np.array([10.0, 20.0])  # second pixel above the cap: excluded
        rec = depth_metrics(pred, gt, cap=15.0)
        assert rec.valid_count == 1
        assert np.isclose(rec.abs_rel, 0.2, rtol=1e-12)

    def test_perfect_prediction(self):
        gt = np.linspace(1.0, 30.0, 50)
        rec = depth_metrics(gt.copy(), gt)
        assert rec.abs_rel == 0.0
        assert rec.rmse == 0.0
        assert rec.delta1 == rec.delta2 == rec.delta3 == 1.0

    def test_delta_monotone_and_strict(self):
        gt = np.full(4, 10.0)
        pred = np.array([10.0, 12.5, 15.625, 19.6])
        rec = depth_metrics(pred, gt)
        # ratios 1.0, 1.25, 1.5625, 1.96: thresholds are strict '<'
        assert rec.delta1 == 0.25
        assert rec.delta2 == 0.5
        assert rec.delta3 == 0.75
        assert rec.delta1 <= rec.delta2 <= rec.delta3

    def test_scale_invariant_metrics(self):
        rng = np.random.default_rng(0)
        gt = rng.uniform(2.0, 40.0, size=200)
        pred = gt * rng.uniform(0.9, 1.1, size=200)
        a = depth_metrics(pred, gt)
        b = depth_metrics(2 * pred, 2 * gt, cap=160.0)
        assert np.isclose(a.abs_rel, b.abs_rel, rtol=1e-12)
        assert np.isclose(a.rmse_log, b.rmse_log, rtol=1e-12)
        assert a.delta1 == b.delta1

    def test_mask_and_empty(self):
        gt = np.array([10.0, 20.0])
        rec = depth_metrics(gt, gt, mask=np.array([True, False]))
        assert rec.valid_count == 1
        with pytest.raises(ValueError, match="valid"):
            depth_metrics(gt, gt, mask=np.zeros(2, dtype=bool))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape"):
            depth_metrics(np.ones(3), np.ones(4))


class TestD1:
    def test_strictly_greater_than_three(self):
        gt = np.zeros(4)
        pred = np.array([2.9, 3.0, 3.1, -4.0])
        assert d1_all(pred, gt) == 50.0

    def test_mask(self):
        gt = np.zeros(3)
        pred = np.array([10.0, 0.0, 0.0])
        assert d1_all(pred, gt, mask=np.array([False, True, True])) == 0.0
        with pytest.raises(ValueError, match="valid"):
            d1_all(pred, gt, mask=np.zeros(3, dtype=bool))


class TestAggregate:
    def rec(self, abs_rel, rmse, count, d1=0.0):
        return MetricsRecord(abs_rel=abs_rel, sq_rel=0.0, rmse=rmse,
                             rmse_log=0.0, delta1=1.0, delta2=1.0,
                             delta3=1.0, d1_all=d1, valid_count=count,
                             depth_cap=80.0)

    def test_count_weighting(self):
        agg = aggregate([self.rec(0.1, 1.0, 1), self.rec(0.4, 2.0, 3)])
        assert np.isclose(agg.abs_rel, 0.25 * 0.1 + 0.75 * 0.4, rtol=1e-12)
        # rmse pools through squared means
        assert np.isclose(agg.rmse, np.sqrt(0.25 * 1.0 + 0.75 * 4.0),
                          rtol=1e-12)
        assert agg.valid_count == 4

    def test_matches_pooled_pixels(self):
        rng = np.random.default_rng(7)
        gt = rng.uniform(2.0, 40.0, size=300)
        pred = gt + rng.normal(scale=1.0, size=300)
        whole = depth_metrics(pred, gt)
        parts = aggregate([depth_metrics(pred[:100], gt[:100]),
                           depth_metrics(pred[100:], gt[100:])])
        assert np.isclose(whole.abs_rel, parts.abs_rel, rtol=1e-12)
        assert np.isclose(whole.rmse, parts.rmse, rtol=1e-12)
        assert np.isclose(whole.delta2, parts.delta2, rtol=1e-12)

    def test_nan_d1_propagates(self):
        agg = aggregate([self.rec(0.1, 1.0, 1, d1=float("nan")),
                         self.rec(0.1, 1.0, 1, d1=2.0)])
        assert np.isnan(agg.d1_all)

    def test_empty(self):
        with pytest.raises(ValueError, match="aggregate"):
            aggregate([])


class TestCsv:
    def test_layout(self, tmp_path):
        gt = np.array([10.0, 20.0])
        recs = [depth_metrics(gt, gt), depth_metrics(gt * 1.1, gt)]
        path = tmp_path / "metrics.csv"
        write_csv(str(path), recs, names=["a", "b"])
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["name"] + MetricsRecord.columns()
        assert [r[0] for r in rows[1:]] == ["a", "b", "aggregate"]
        assert float(rows[3][1]) == pytest.approx(aggregate(recs).abs_rel)
