"""Fusion of the two center-aligned maps and flip-based post-processing.

The per-column weight keeps the left 5% band from the center-left map, the
right >95% band from the center-right map, and averages the rest.
"""

from __future__ import annotations

import numpy as np

from . import model as net
from .autodiff import Tensor
from .warp import DisparityMap


def omega(j):
    """Piecewise fusion weight over the normalized column coordinate."""
    j = float(j)
    if not 0.0 <= j <= 1.0:
        raise ValueError(f"normalized column {j} outside [0, 1]")
    if j <= 0.05:
        return 0.0
    if j > 0.95:
        return 1.0
    return 0.5


def omega_profile(width):
    """omega evaluated at j = column/(width-1) for every column."""
    js = np.arange(width, dtype=np.float64) / (width - 1)
    return np.array([omega(j) for j in js], dtype=np.float32)


def _values(d):
    return d.values.data if isinstance(d.values, Tensor) else np.asarray(d.values)


def fuse(d_cl, d_cr, profile=None):
    """Per-column convex combination omega*d_cr + (1-omega)*d_cl."""
    if d_cl.tag != "cl" or d_cr.tag != "cr":
        raise ValueError(f"fuse needs tags cl/cr, got {d_cl.tag}/{d_cr.tag}")
    a = _values(d_cl)
    b = _values(d_cr)
    if a.shape != b.shape:
        raise ValueError(f"fuse extents differ: {a.shape} vs {b.shape}")
    w = omega_profile(a.shape[-1]) if profile is None else profile
    fused = w * b + (1.0 - w) * a
    return DisparityMap(Tensor(fused.astype(a.dtype)), tag="c", level=d_cl.level)


def _flip_map(d):
    """Mirror of a disparity map: flip columns, keep values."""
    return _values(d)[..., ::-1].copy()


def post_process(params, image, profile=None):
    """Flip-based refinement: exactly two forwards, then per-map blending.

    The mirrored forward's maps are un-flipped to align with the input; the
    center-right map blends its own left band from the mirrored estimate and
    the center-left map symmetrically, before the usual fusion.
    """
    img = np.asarray(image, dtype=np.float32)
    if img.ndim == 3:
        img = img[None]
    flipped = img[..., ::-1].copy()

    out = net.forward(params, img)
    out_flip = net.forward(params, flipped)

    d_cl = _values(out.level0("cl"))
    d_cr = _values(out.level0("cr"))
    d_cl_hat = _flip_map(out_flip.level0("cl"))
    d_cr_hat = _flip_map(out_flip.level0("cr"))

    w = omega_profile(img.shape[-1]) if profile is None else profile
    d_cr_pp = w * d_cr + (1.0 - w) * d_cr_hat
    d_cl_pp = w * d_cl_hat + (1.0 - w) * d_cl
    return fuse(DisparityMap(Tensor(d_cl_pp.astype(np.float32)), tag="cl"),
                DisparityMap(Tensor(d_cr_pp.astype(np.float32)), tag="cr"),
                profile=w)
