"""Differentiable horizontal bilinear sampling and image pyramids.

All views are rectified, so resampling happens along rows only.  Disparities
are non-negative; the sampling direction is carried by an explicit sign.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

#: network output tags: first letter = view the map is aligned to,
#: second letter = view the map points at.
VIEW_TAGS = ("cl", "lc", "cr", "rc")


@dataclass
class DisparityMap:
    """Single-channel disparity in pixel units, tagged with its viewpoint."""

    values: Tensor  # (B, 1, H, W)
    tag: str
    level: int = 0


def sample_along_rows(source, disp, sign):
    """Bilinear lookup of `source` at column x + sign*disp(x), border-clamped.

    Differentiable w.r.t. both the source image and the disparity.  Output row
    r depends only on source row r.
    """
    if sign not in (1, -1):
        raise ValueError(f"sign must be +1 or -1, got {sign}")
    src = source if isinstance(source, Tensor) else Tensor(source)
    d = disp if isinstance(disp, Tensor) else Tensor(disp)
    if src.data.ndim != 4 or d.data.ndim != 4 or d.data.shape[1] != 1:
        raise ValueError("expected NCHW source and N1HW disparity")
    if src.data.shape[0] != d.data.shape[0] or src.data.shape[2:] != d.data.shape[2:]:
        raise ValueError(f"source {src.data.shape} and disparity {d.data.shape} "
                         "spatial extents differ")
    if np.any(d.data < 0):
        raise ValueError("negative disparity entries (network outputs forbid them)")

    B, C, H, W = src.data.shape
    xs = np.arange(W, dtype=src.data.dtype)
    raw = xs + sign * d.data  # (B,1,H,W)
    pos = np.clip(raw, 0.0, W - 1.0)
    x0 = np.floor(pos).astype(np.int64)
    x0 = np.minimum(x0, W - 2) if W > 1 else x0
    x1 = np.minimum(x0 + 1, W - 1)
    f = (pos - x0).astype(src.data.dtype)

    idx0 = np.broadcast_to(x0, (B, C, H, W))
    idx1 = np.broadcast_to(x1, (B, C, H, W))
    s0 = np.take_along_axis(src.data, idx0, axis=-1)
    s1 = np.take_along_axis(src.data, idx1, axis=-1)
    out = (1.0 - f) * s0 + f * s1

    inside = ((raw >= 0.0) & (raw <= W - 1.0)).astype(src.data.dtype)

    def backward(g):
        gsrc = None
        if src.requires_grad:
            gsrc = np.zeros_like(src.data)
            np.add.at(gsrc, (np.arange(B)[:, None, None, None],
                             np.arange(C)[None, :, None, None],
                             np.arange(H)[None, None, :, None], idx0), g * (1.0 - f))
            np.add.at(gsrc, (np.arange(B)[:, None, None, None],
                             np.arange(C)[None, :, None, None],
                             np.arange(H)[None, None, :, None], idx1), g * f)
        gdisp = None
        if d.requires_grad:
            gdisp = (g * (s1 - s0)).sum(axis=1, keepdims=True) * sign * inside
        return gsrc, gdisp

    return ad.custom_op(out, (src, d), backward)


def _pool2x2(img):
    h, w = img.data.shape[-2], img.data.shape[-1]
    if h % 2 or w % 2:
        raise ValueError(f"extents {h}x{w} not divisible by 2")
    return (img[..., 0::2, 0::2] + img[..., 1::2, 0::2]
            + img[..., 0::2, 1::2] + img[..., 1::2, 1::2]) * 0.25


def build_pyramid(image, levels=4):
    """Image pyramid by repeated 2x2 mean pooling; level 0 is the input."""
    img = image if isinstance(image, Tensor) else Tensor(image)
    if levels < 1:
        raise ValueError("levels must be >= 1")
    min_extent = min(img.data.shape[-2], img.data.shape[-1])
    if 2 ** (levels - 1) > min_extent:
        raise ValueError(f"{levels} levels exceed log2 of min extent {min_extent}")
    pyramid = [img]
    for _ in range(levels - 1):
        pyramid.append(_pool2x2(pyramid[-1]))
    return pyramid
