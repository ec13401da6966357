"""Depth and disparity evaluation: the seven headline scores plus D1-all."""

from __future__ import annotations

import csv
from dataclasses import dataclass, fields

import numpy as np

_PRED_FLOOR = 1e-3  # meters; keeps log/ratio metrics defined


@dataclass
class CameraModel:
    focal: float      # pixels
    baseline: float   # meters

    def __post_init__(self):
        if self.focal <= 0 or self.baseline <= 0:
            raise ValueError("focal and baseline must be strictly positive")

    @property
    def fb(self):
        return self.focal * self.baseline


@dataclass
class MetricsRecord:
    abs_rel: float
    sq_rel: float
    rmse: float
    rmse_log: float
    delta1: float
    delta2: float
    delta3: float
    d1_all: float
    valid_count: int
    depth_cap: float

    @staticmethod
    def columns():
        return [f.name for f in fields(MetricsRecord)]

    def row(self):
        return [getattr(self, name) for name in self.columns()]


def disparity_to_depth(disp, cam):
    """depth = focal*baseline / disparity; non-positive entries become invalid."""
    disp = np.asarray(disp, dtype=np.float64)
    valid = disp > 0
    depth = np.zeros_like(disp)
    depth[valid] = cam.fb / disp[valid]
    return depth, valid


def depth_metrics(pred, gt, cap=80.0, mask=None, d1=float("nan")):
    """Standard depth scores over pixels with valid ground truth below the cap."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"pred {pred.shape} and gt {gt.shape} shapes differ")
    valid = (gt > 0) & (gt <= cap)
    if mask is not None:
        valid &= np.asarray(mask, dtype=bool)
    n = int(valid.sum())
    if n == 0:
        raise ValueError("no valid pixels to evaluate")
    p = np.clip(pred[valid], _PRED_FLOOR, cap)
    g = gt[valid]

    err = p - g
    ratio = np.maximum(p / g, g / p)
    return MetricsRecord(
        abs_rel=float(np.mean(np.abs(err) / g)),
        sq_rel=float(np.mean(err ** 2 / g)),
        rmse=float(np.sqrt(np.mean(err ** 2))),
        rmse_log=float(np.sqrt(np.mean((np.log(p) - np.log(g)) ** 2))),
        delta1=float(np.mean(ratio < 1.25)),
        delta2=float(np.mean(ratio < 1.25 ** 2)),
        delta3=float(np.mean(ratio < 1.25 ** 3)),
        d1_all=d1,
        valid_count=n,
        depth_cap=cap,
    )


def d1_all(pred_disp, gt_disp, mask=None):
    """Percentage of pixels with disparity error strictly larger than 3 px."""
    pred = np.asarray(pred_disp, dtype=np.float64)
    gt = np.asarray(gt_disp, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"pred {pred.shape} and gt {gt.shape} shapes differ")
    valid = np.ones(gt.shape, dtype=bool) if mask is None else \
        np.asarray(mask, dtype=bool)
    n = int(valid.sum())
    if n == 0:
        raise ValueError("no valid pixels to evaluate")
    return float(100.0 * np.mean(np.abs(pred[valid] - gt[valid]) > 3.0))


def aggregate(records):
    """Valid-count weighted combination of per-image records.

    Mean-based metrics combine linearly; RMSE-type metrics combine through
    their squared means so the result matches pooling all pixels.
    """
    if not records:
        raise ValueError("nothing to aggregate")
    counts = np.array([r.valid_count for r in records], dtype=np.float64)
    w = counts / counts.sum()

    def wmean(attr):
        return float(np.sum(w * np.array([getattr(r, attr) for r in records])))

    def wrms(attr):
        return float(np.sqrt(np.sum(
            w * np.array([getattr(r, attr) for r in records]) ** 2)))

    d1s = np.array([r.d1_all for r in records])
    return MetricsRecord(
        abs_rel=wmean("abs_rel"), sq_rel=wmean("sq_rel"),
        rmse=wrms("rmse"), rmse_log=wrms("rmse_log"),
        delta1=wmean("delta1"), delta2=wmean("delta2"), delta3=wmean("delta3"),
        d1_all=float(np.sum(w * d1s)) if np.all(np.isfinite(d1s)) else float("nan"),
        valid_count=int(counts.sum()),
        depth_cap=records[0].depth_cap,
    )


def write_csv(path, records, names=None):
    """One row per record plus an aggregate row, fixed column order."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["name"] + MetricsRecord.columns())
        for i, rec in enumerate(records):
            name = names[i] if names else f"image_{i:06d}"
            writer.writerow([name] + rec.row())
        writer.writerow(["aggregate"] + aggregate(records).row())
