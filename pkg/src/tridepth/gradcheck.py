"""Finite-difference gradient suite: every primitive, every loss term, the
bilinear sampler and a full phase-1 composite, at 32- or 64-bit precision."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, finite_diff_check
from .losses import (LossWeights, appearance_loss, lr_consistency_loss,
                     phase1_loss, smoothness_loss, ssim_map)
from .warp import DisparityMap, sample_along_rows


@dataclass
class GradcheckReport:
    lines: list = field(default_factory=list)
    passed: bool = True
    max_err: float = 0.0

    def add(self, name, err, tol):
        ok = err < tol
        self.lines.append(f"{'ok ' if ok else 'BAD'} {name:40s} "
                          f"rel_err {err:.3e}  (tol {tol:.0e})")
        self.passed &= ok
        self.max_err = max(self.max_err, err)


def _build_checks(seed, dtype):
    """The check set at one precision: a list of (name, f, leaf tensor).

    Built twice from the same seed when cross-precision comparison is needed;
    the random draws are identical up to the final cast.
    """
    rng = np.random.default_rng(seed)

    def rand(shape, lo=0.1, hi=0.9):
        return Tensor(rng.uniform(lo, hi, size=shape).astype(dtype))

    checks = []
    x = rand((1, 2, 4, 5))
    y = rand((1, 2, 4, 5))

    pointwise = {
        "add": lambda t: ad.mean((t + y) * (t + y)),
        "sub": lambda t: ad.mean((t - y) * (t - y)),
        "mul": lambda t: ad.mean(t * y),
        "div": lambda t: ad.mean(t / (y + 0.5)),
        "abs": lambda t: ad.mean(ad.abs_(t - 0.5)),
        "exp": lambda t: ad.mean(ad.exp(t)),
        "log": lambda t: ad.mean(ad.log(t + 0.5)),
        "sigmoid": lambda t: ad.mean(ad.sigmoid(t)),
        "elu": lambda t: ad.mean(ad.elu(t - 0.5)),
        "clamp": lambda t: ad.mean(ad.clamp(t, 0.2, 0.8)),
        "mean": lambda t: ad.mean(t * t),
        "sum": lambda t: ad.sum_(t * t) * 0.1,
        "box_mean3": lambda t: ad.mean(ad.box_mean3(t) * y),
        "slice": lambda t: ad.mean(t[..., 1:, :-1] * y.data[..., 1:, :-1]),
    }
    for name, f in pointwise.items():
        checks.append((f"pointwise/{name}", f, x))

    kernel = rand((3, 2, 3, 3), -0.5, 0.5)
    checks.append(("conv2d/input",
                   lambda t: ad.mean(ad.conv2d(t, kernel, stride=1, padding=1)
                                     * ad.conv2d(t, kernel, stride=1, padding=1)),
                   x))
    inp = rand((1, 2, 5, 6))
    checks.append(("conv2d/kernel",
                   lambda t: ad.mean(ad.conv2d(inp, t, stride=2, padding=1)
                                     * ad.conv2d(inp, t, stride=2, padding=1)),
                   kernel))
    checks.append(("upsample2x",
                   lambda t: ad.mean(ad.upsample2x(t) * ad.upsample2x(t)), x))

    # sampler: non-integer disparities keep us away from the bilinear knots
    src = rand((1, 2, 4, 8))
    disp0 = rand((1, 1, 4, 8), 0.3, 1.7)
    checks.append(("sampler/source",
                   lambda t: ad.mean(sample_along_rows(t, disp0, -1) * 3.0), src))
    checks.append(("sampler/disparity",
                   lambda t: ad.mean(sample_along_rows(src, t, -1)
                                     * sample_along_rows(src, t, -1)), disp0))

    img_a = rand((1, 3, 4, 8))
    img_b = rand((1, 3, 4, 8))
    checks.append(("loss/ssim",
                   lambda t: ad.mean(ssim_map(t, img_b)), img_a))
    checks.append(("loss/appearance",
                   lambda t: appearance_loss(img_b, t), img_a))
    dmap = rand((1, 1, 4, 8), 0.3, 1.7)
    checks.append(("loss/smoothness",
                   lambda t: smoothness_loss(t, img_a), dmap))
    other = rand((1, 1, 4, 8), 0.3, 1.7)
    checks.append(("loss/lr_consistency",
                   lambda t: lr_consistency_loss(t, other, +1), dmap))

    # full phase-1 composite on a 4x8 image: channel 0 plays d_cl, channel 1 d_lc
    weights = LossWeights()

    def composite(t):
        outputs = {
            "cl": [DisparityMap(t[:, 0:1], tag="cl")],
            "lc": [DisparityMap(t[:, 1:2], tag="lc")],
        }
        return phase1_loss([img_a], [img_b], outputs, weights).total

    checks.append(("composite/phase1", composite, rand((1, 2, 4, 8), 0.3, 1.7)))
    return checks


def _fd64(f, x, eps):
    """Central differences of a float64-built f; the reference gradient."""
    base = x.data.copy()
    numeric = np.zeros_like(base)
    flat = base.reshape(-1)
    nflat = numeric.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = float(f(Tensor(base)).data)
        flat[i] = orig - eps
        lo = float(f(Tensor(base)).data)
        flat[i] = orig
        nflat[i] = (hi - lo) / (2 * eps)
    return numeric


def _analytic(f, x):
    leaf = Tensor(x.data.copy(), requires_grad=True)
    with ad.Tape() as tape:
        y = f(leaf)
    if not np.isfinite(y.data):
        raise FloatingPointError("f(x) is not finite")
    return tape.backward(y).of(leaf)


def run_gradcheck(precision=64, seed=0, eps=None, tol=None):
    """Run the whole suite; returns a report with one line per check.

    64-bit: plain finite_diff_check.  32-bit: the analytic gradient of the
    float32 graph against a float64 finite-difference oracle — pure float32
    differencing is useless because the per-element change in the loss sits
    at the rounding floor of float32.
    """
    eps = (1e-5 if precision == 64 else 1e-6) if eps is None else eps
    tol = (1e-5 if precision == 64 else 1e-3) if tol is None else tol
    report = GradcheckReport()

    if precision == 64:
        for name, f, x in _build_checks(seed, np.float64):
            report.add(name, finite_diff_check(f, x, eps), tol)
        return report

    checks32 = _build_checks(seed, np.float32)
    checks64 = _build_checks(seed, np.float64)
    for (name, f32, x32), (_, f64, x64) in zip(checks32, checks64):
        analytic = _analytic(f32, x32).astype(np.float64)
        numeric = _fd64(f64, x64, eps)
        denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
        # only the composite carries the tight bound; individual terms can
        # have near-zero gradient elements whose relative error is all noise
        check_tol = tol if name.startswith("composite/") else max(tol, 1e-2)
        report.add(name, float((np.abs(analytic - numeric) / denom).max()),
                   check_tol)
    return report
