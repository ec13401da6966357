"""View synthesis from the network's side-aligned maps, plus a classical
Semi-Global Matching demo over the resulting narrow/wide baseline pairs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import model as net
from .warp import sample_along_rows
from .autodiff import Tensor


@dataclass
class SgmParams:
    max_disparity: int = 32
    census_window: int = 5
    p1: int = 10
    p2: int = 120
    paths: int = 8
    uniqueness_check: bool = False

    def __post_init__(self):
        if self.census_window % 2 == 0 or self.census_window < 3:
            raise ValueError("census window must be odd and >= 3")
        if not 0 < self.p1 < self.p2:
            raise ValueError("need P2 > P1 > 0")
        if self.paths not in (4, 8):
            raise ValueError("paths must be 4 or 8")


def synthesize_views(image_c, d_lc, d_rc):
    """Backward-warp the center image to the two virtual side viewpoints."""
    if d_lc.tag != "lc" or d_rc.tag != "rc":
        raise ValueError(f"synthesize_views needs tags lc/rc, got "
                         f"{d_lc.tag}/{d_rc.tag}")
    img = np.asarray(image_c, dtype=np.float32)
    if img.ndim == 3:
        img = img[None]

    def warp(disp, sign):
        d = disp.values.data if isinstance(disp.values, Tensor) else \
            np.asarray(disp.values)
        if d.ndim == 2:
            d = d[None, None]
        out = sample_along_rows(Tensor(img), Tensor(d.astype(np.float32)), sign)
        return out.data[0]

    return warp(d_lc, -1), warp(d_rc, +1)


def to_grayscale(image):
    img = np.asarray(image, dtype=np.float32)
    return img.mean(axis=0) if img.ndim == 3 else img


def census(image, window=5):
    """Census transform: bit set iff neighbor < center (strict), raster order
    over the window excluding the center; borders use clamped neighborhoods."""
    gray = np.asarray(image, dtype=np.float32)
    if gray.ndim != 2:
        raise ValueError(f"census expects grayscale (H, W), got {gray.shape}")
    r = window // 2
    padded = np.pad(gray, r, mode="edge")
    H, W = gray.shape
    out = np.zeros((H, W), dtype=np.uint64)
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            if dy == 0 and dx == 0:
                continue
            neighbor = padded[r + dy:r + dy + H, r + dx:r + dx + W]
            out = (out << np.uint64(1)) | (neighbor < gray).astype(np.uint64)
    return out


def _popcount(x):
    if hasattr(np, "bitwise_count"):
        return np.bitwise_count(x).astype(np.int32)
    v = x.copy()
    total = np.zeros(x.shape, dtype=np.int32)
    while np.any(v):
        total += (v & np.uint64(1)).astype(np.int32)
        v >>= np.uint64(1)
    return total


def _cost_volume(census_ref, census_tgt, max_disp):
    """Hamming cost volume (H, W, D): ref pixel x against target pixel x-d."""
    H, W = census_ref.shape
    cost = np.empty((H, W, max_disp + 1), dtype=np.int32)
    for d in range(max_disp + 1):
        shifted = np.empty_like(census_tgt)
        if d == 0:
            shifted[:] = census_tgt
        else:
            shifted[:, d:] = census_tgt[:, :-d]
            shifted[:, :d] = census_tgt[:, :1]  # clamp to border column
        cost[:, :, d] = _popcount(np.bitwise_xor(census_ref, shifted))
    return cost


def _dp_step(cost_slice, prev, p1, p2):
    """One DP update along a path: cost + min(jump penalties) - min(prev)."""
    m = prev.min(axis=-1, keepdims=True)
    up = np.empty_like(prev)
    up[..., :-1] = prev[..., 1:]
    up[..., -1] = prev[..., -1]
    down = np.empty_like(prev)
    down[..., 1:] = prev[..., :-1]
    down[..., 0] = prev[..., 0]
    cand = np.minimum(prev, np.minimum(up, down) + p1)
    cand = np.minimum(cand, m + p2)
    return cost_slice + cand - m


_DIRECTIONS_8 = [(0, 1), (0, -1), (1, 0), (-1, 0),
                 (1, 1), (1, -1), (-1, 1), (-1, -1)]


def _aggregate_path(cost, dr, dc, p1, p2):
    H, W, D = cost.shape
    L = np.empty_like(cost)
    if dr == 0:
        cols = range(W) if dc > 0 else range(W - 1, -1, -1)
        for i, c in enumerate(cols):
            L[:, c] = cost[:, c] if i == 0 else _dp_step(cost[:, c], L[:, c - dc], p1, p2)
    else:
        rows = range(H) if dr > 0 else range(H - 1, -1, -1)
        for i, r in enumerate(rows):
            if i == 0:
                L[r] = cost[r]
                continue
            prev = L[r - dr]
            if dc:
                shifted = np.empty_like(prev)
                if dc > 0:
                    shifted[1:] = prev[:-1]
                    shifted[0] = cost[r, 0]  # no predecessor off the edge
                else:
                    shifted[:-1] = prev[1:]
                    shifted[-1] = cost[r, -1]
                prev = shifted
            L[r] = _dp_step(cost[r], prev, p1, p2)
            if dc > 0:
                L[r, 0] = cost[r, 0]
            elif dc < 0:
                L[r, -1] = cost[r, -1]
    return L


def sgm(left, right, params=None):
    """Integer disparity of the left (reference) image by SGM.

    Census Hamming matching cost, 8-path aggregation with penalties P1/P2,
    winner-take-all with ties broken toward the smallest disparity.
    """
    params = params or SgmParams()
    gray_l = to_grayscale(left)
    gray_r = to_grayscale(right)
    if gray_l.shape != gray_r.shape:
        raise ValueError(f"pair shapes differ: {gray_l.shape} vs {gray_r.shape}")
    if params.max_disparity >= gray_l.shape[1]:
        raise ValueError(f"max disparity {params.max_disparity} >= width "
                         f"{gray_l.shape[1]}")
    census_l = census(gray_l, params.census_window)
    census_r = census(gray_r, params.census_window)
    cost = _cost_volume(census_l, census_r, params.max_disparity)

    dirs = _DIRECTIONS_8[:params.paths] if params.paths == 8 else \
        _DIRECTIONS_8[:4]
    summed = np.zeros(cost.shape, dtype=np.int64)
    for dr, dc in dirs:
        summed += _aggregate_path(cost, dr, dc, params.p1, params.p2)
    disp = np.argmin(summed, axis=-1).astype(np.float32)

    if params.uniqueness_check:
        # right-reference winner from the same volume: costR(x, d) = cost(x+d, d)
        H, W, D = cost.shape
        summed_r = np.full((H, W, D), np.iinfo(np.int64).max, dtype=np.int64)
        for d in range(D):
            summed_r[:, :W - d if d else W, d] = summed[:, d:, d]
        disp_r = np.argmin(summed_r, axis=-1).astype(np.float32)
        xs = np.arange(W)[None, :]
        match = np.clip(np.rint(xs - disp).astype(int), 0, W - 1)
        bad = np.abs(disp - disp_r[np.arange(H)[:, None], match]) > 1.0
        disp[bad] = -1.0
    return disp


def multi_baseline_demo(params_net, image_c, sgm_params=None):
    """Synthesize both side views and run SGM over narrow and wide pairs.

    Returns the two synthesized views and three disparity maps; the wide pair
    spans twice the baseline, so its disparities are about twice the narrow
    ones on shared surfaces.
    """
    sgm_params = sgm_params or SgmParams()
    img = np.asarray(image_c, dtype=np.float32)
    if img.ndim == 3:
        img = img[None]
    outputs = net.forward(params_net, img)
    left_view, right_view = synthesize_views(
        img, outputs.level0("lc"), outputs.level0("rc"))

    wide = SgmParams(max_disparity=min(2 * sgm_params.max_disparity,
                                       img.shape[-1] - 1),
                     census_window=sgm_params.census_window,
                     p1=sgm_params.p1, p2=sgm_params.p2,
                     paths=sgm_params.paths,
                     uniqueness_check=sgm_params.uniqueness_check)
    return {
        "view_l": left_view,
        "view_r": right_view,
        "sgm_lc": sgm(left_view, img[0], sgm_params),
        "sgm_cr": sgm(img[0], right_view, sgm_params),
        "sgm_lr": sgm(left_view, right_view, wide),
    }
