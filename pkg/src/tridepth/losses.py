"""Training loss stack: appearance (SSIM + L1), edge-aware smoothness,
left-right consistency, and the two phase losses combining them per scale."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .warp import sample_along_rows

_SSIM_C1 = 0.01 ** 2
_SSIM_C2 = 0.03 ** 2


@dataclass
class LossWeights:
    beta_ap: float = 1.0
    beta_ds: float = 0.1
    beta_lcr: float = 1.0
    alpha: float = 0.85
    #: halve the smoothness weight at each coarser scale
    scale_attenuation: bool = True
    #: include the center-consistency term (off: it propagates occlusion
    #: artifacts between the two center maps)
    use_center_consistency: bool = False
    beta_cc: float = 0.0


@dataclass
class LossBreakdown:
    """Per-term, per-scale scalars plus the differentiable total."""

    per_scale: list = field(default_factory=list)  # dicts: ap / ds / lr floats
    total: Tensor = None

    @property
    def total_value(self):
        return float(self.total.data)

    def term_total(self, name):
        return sum(s[name] for s in self.per_scale)


def ssim_map(a, b):
    """Windowed SSIM with 3x3 mean statistics, per channel, same spatial size."""
    a = a if isinstance(a, Tensor) else Tensor(a)
    b = b if isinstance(b, Tensor) else Tensor(b)
    if a.data.shape != b.data.shape:
        raise ValueError(f"ssim_map shape mismatch: {a.data.shape} vs {b.data.shape}")
    mu_a = ad.box_mean3(a)
    mu_b = ad.box_mean3(b)
    var_a = ad.box_mean3(a * a) - mu_a * mu_a
    var_b = ad.box_mean3(b * b) - mu_b * mu_b
    cov = ad.box_mean3(a * b) - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + _SSIM_C1) * (2.0 * cov + _SSIM_C2)
    den = (mu_a * mu_a + mu_b * mu_b + _SSIM_C1) * (var_a + var_b + _SSIM_C2)
    return num / den


def appearance_loss(real, warped, alpha=0.85):
    """Mean of alpha*(1-SSIM)/2 + (1-alpha)*|real - warped|, channel-averaged."""
    real = real if isinstance(real, Tensor) else Tensor(real)
    warped = warped if isinstance(warped, Tensor) else Tensor(warped)
    if real.data.shape != warped.data.shape:
        raise ValueError(f"appearance_loss shape mismatch: {real.data.shape} vs "
                         f"{warped.data.shape}")
    ssim_term = (1.0 - ssim_map(real, warped)) * 0.5
    l1_term = ad.abs_(real - warped)
    return ad.mean(alpha * ssim_term + (1.0 - alpha) * l1_term)


def _image_gradient_weights(image):
    """exp(-channel-mean |forward difference|) of a constant reference image."""
    img = image.data if isinstance(image, Tensor) else np.asarray(image)
    gx = np.abs(img[..., :, 1:] - img[..., :, :-1]).mean(axis=1, keepdims=True)
    gy = np.abs(img[..., 1:, :] - img[..., :-1, :]).mean(axis=1, keepdims=True)
    return np.exp(-gx), np.exp(-gy)


def smoothness_loss(disp, image):
    """Edge-aware smoothness: |dx d|*exp(-|dx I|) + |dy d|*exp(-|dy I|)."""
    d = disp if isinstance(disp, Tensor) else Tensor(disp)
    img_shape = image.data.shape if isinstance(image, Tensor) else np.shape(image)
    if d.data.shape[-2:] != tuple(img_shape[-2:]):
        raise ValueError(f"smoothness_loss extents mismatch: {d.data.shape[-2:]} vs "
                         f"{tuple(img_shape[-2:])}")
    wx, wy = _image_gradient_weights(image)
    dx = ad.abs_(d[..., :, 1:] - d[..., :, :-1])
    dy = ad.abs_(d[..., 1:, :] - d[..., :-1, :])
    return ad.mean(dx * Tensor(wx.astype(d.data.dtype))) + \
        ad.mean(dy * Tensor(wy.astype(d.data.dtype)))


def lr_consistency_loss(d_ref, d_tgt, sign):
    """L1 between d_ref and d_tgt sampled at x + sign*d_ref(x)."""
    d_ref = d_ref if isinstance(d_ref, Tensor) else Tensor(d_ref)
    d_tgt = d_tgt if isinstance(d_tgt, Tensor) else Tensor(d_tgt)
    if d_ref.data.shape != d_tgt.data.shape:
        raise ValueError(f"lr_consistency shape mismatch: {d_ref.data.shape} vs "
                         f"{d_tgt.data.shape}")
    warped = sample_along_rows(d_tgt, d_ref, sign)
    return ad.mean(ad.abs_(d_ref - warped))


def center_consistency_loss(d_cl, d_cr):
    """Mean |d_cl - d_cr| between the two center-aligned maps (off by default)."""
    if d_cl.tag != "cl" or d_cr.tag != "cr":
        raise ValueError(f"center consistency needs tags cl/cr, got "
                         f"{d_cl.tag}/{d_cr.tag}")
    return ad.mean(ad.abs_(d_cl.values - d_cr.values))


def _phase_loss(pyr_side, pyr_center, outputs, w, center_tag, side_tag,
                warp_sign, lr_sign):
    levels = len(pyr_center)
    per_scale = []
    total = None
    for s in range(levels):
        if s >= len(outputs[center_tag]) or s >= len(outputs[side_tag]):
            raise ValueError(f"missing pyramid level {s} in network outputs")
        d_center = outputs[center_tag][s].values
        d_side = outputs[side_tag][s].values
        i_c = pyr_center[s]
        i_side = pyr_side[s]

        # reconstruct the center view from the side view, and vice versa
        warped_center = sample_along_rows(i_side, d_center, warp_sign)
        warped_side = sample_along_rows(i_c, d_side, -warp_sign)

        ap = appearance_loss(i_c, warped_center, w.alpha) + \
            appearance_loss(i_side, warped_side, w.alpha)
        ds = smoothness_loss(d_center, i_c) + smoothness_loss(d_side, i_side)
        if w.scale_attenuation:
            ds = ds * (1.0 / 2 ** s)
        lr = lr_consistency_loss(d_center, d_side, lr_sign)

        per_scale.append({"ap": float(ap.data), "ds": float(ds.data),
                          "lr": float(lr.data)})
        scale_total = w.beta_ap * ap + w.beta_ds * ds + w.beta_lcr * lr
        total = scale_total if total is None else total + scale_total
    return LossBreakdown(per_scale=per_scale, total=total)


def phase1_loss(pyr_l, pyr_c, outputs, w):
    """Phase-1 loss over tags {cl, lc}: center view paired with the left view."""
    return _phase_loss(pyr_l, pyr_c, outputs, w, center_tag="cl", side_tag="lc",
                       warp_sign=+1, lr_sign=+1)


def phase2_loss(pyr_c, pyr_r, outputs, w):
    """Phase-2 loss over tags {cr, rc}: center view paired with the right view."""
    return _phase_loss(pyr_r, pyr_c, outputs, w, center_tag="cr", side_tag="rc",
                       warp_sign=-1, lr_sign=-1)
