"""Checkpoint evaluation over a dataset of synthetic scenes."""

from __future__ import annotations

import numpy as np

from . import fusion, metrics, model as net


def predict_center_map(params, image_c, pp=False):
    """Fused center disparity for one image; returns (d_c, d_cl, d_cr, forwards)."""
    img = np.asarray(image_c, dtype=np.float32)
    if img.ndim == 3:
        img = img[None]
    before = params.forward_count
    if pp:
        d_c = fusion.post_process(params, img)
        outputs = None
        d_cl = d_cr = None
    else:
        outputs = net.forward(params, img)
        d_cl = outputs.level0("cl")
        d_cr = outputs.level0("cr")
        d_c = fusion.fuse(d_cl, d_cr)
    forwards = params.forward_count - before
    return d_c, d_cl, d_cr, forwards


def evaluate_scene(params, sample, cap=80.0, pp=False):
    """MetricsRecord of the fused map against one scene's ground truth."""
    d_c, _, _, forwards = predict_center_map(params, sample.ic, pp=pp)
    pred_disp = d_c.values.data[0, 0]
    gt_disp = sample.gt_cl

    pred_depth, _ = metrics.disparity_to_depth(pred_disp, sample.camera)
    gt_depth, gt_valid = metrics.disparity_to_depth(gt_disp, sample.camera)
    record = metrics.depth_metrics(
        pred_depth, gt_depth, cap=cap, mask=gt_valid,
        d1=metrics.d1_all(pred_disp, gt_disp, mask=gt_valid))
    return record, forwards


def evaluate_dataset(params, samples, cap=80.0, pp=False):
    records = []
    forwards = []
    for sample in samples:
        record, n = evaluate_scene(params, sample, cap=cap, pp=pp)
        records.append(record)
        forwards.append(n)
    return records, forwards
