"""Deterministic rectified trinocular scenes with exact ground-truth disparity.

A scene is a textured background plane plus textured fronto-parallel
rectangles, sorted far to near.  The center view composites the layers in
place; the side views shift each layer horizontally by +/- its disparity
before compositing (painter's algorithm), so occlusions and ground truth are
exact by construction.  Textures extend beyond the image so disoccluded
pixels stay well-defined.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field

import numpy as np

from . import imageio
from .metrics import CameraModel


@dataclass
class SceneSpec:
    height: int = 64
    width: int = 128
    num_layers: int = 4
    d_min: float = 2.0
    d_max: float = 14.0
    noise_amplitude: float = 0.0
    #: integer layer disparities keep the warp oracles exact
    subpixel: bool = False
    focal: float = 10.0
    baseline: float = 10.0

    def __post_init__(self):
        if self.height % 8 or self.width % 8:
            raise ValueError(f"extents {self.height}x{self.width} must be "
                             "divisible by 8")
        if self.d_min <= 0 or self.d_max < self.d_min:
            raise ValueError("need 0 < d_min <= d_max")
        if self.d_max > 0.3 * self.width:
            raise ValueError(f"d_max {self.d_max} exceeds 0.3 * width "
                             f"({0.3 * self.width})")
        if self.num_layers < 1:
            raise ValueError("need at least the background layer")


@dataclass
class TrinocularSample:
    """Three rectified views plus evaluation-only ground truth."""

    il: np.ndarray          # (3, H, W) float32 in [0, 1]
    ic: np.ndarray
    ir: np.ndarray
    gt_cl: np.ndarray       # (H, W) float32, pixels
    gt_cr: np.ndarray
    occ_l: np.ndarray       # (H, W) bool: center pixels hidden in the left view
    occ_r: np.ndarray
    camera: CameraModel
    spec: SceneSpec = field(repr=False, default=None)


def _value_noise(rng, h, w, cell=8):
    """Smooth seeded texture in [0,1]: bilinear-upsampled random grid."""
    gh, gw = h // cell + 2, w // cell + 2
    grid = rng.random((gh, gw))
    ys = np.arange(h) / cell
    xs = np.arange(w) / cell
    y0 = ys.astype(int)
    x0 = xs.astype(int)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    a = grid[y0][:, x0]
    b = grid[y0][:, x0 + 1]
    c = grid[y0 + 1][:, x0]
    d = grid[y0 + 1][:, x0 + 1]
    return (a * (1 - fy) * (1 - fx) + b * (1 - fy) * fx
            + c * fy * (1 - fx) + d * fy * fx)


def _layer_texture(rng, h, w, depth_frac):
    """Seeded value-noise texture whose brightness encodes distance.

    `depth_frac` in [0, 1] places the layer between the far (0) and near (1)
    end of the scene's disparity range; near layers are rendered brighter, a
    stand-in for aerial perspective that gives a monocular network an
    appearance cue correlated with depth.
    """
    base = _value_noise(rng, h, w)
    luma = 0.25 + 0.5 * depth_frac
    bias = luma + rng.uniform(-0.08, 0.08, size=3)
    gain = rng.uniform(0.3, 0.6, size=3)
    tex = bias[:, None, None] + gain[:, None, None] * (base - 0.5)
    # second octave so every region keeps photometric gradient signal
    tex += 0.12 * (_value_noise(rng, h, w, cell=3) - 0.5)
    return np.clip(tex, 0.02, 0.98).astype(np.float32)


def generate_scene(spec, seed):
    """Render one trinocular sample; (spec, seed) fixes every byte."""
    rng = np.random.default_rng(seed)
    H, W = spec.height, spec.width
    pad = int(np.ceil(spec.d_max)) + 1
    We = W + 2 * pad  # extended width, in center-view coordinates

    # far-to-near layer disparities
    if spec.subpixel:
        disps = np.sort(rng.uniform(spec.d_min, spec.d_max, size=spec.num_layers))
    else:
        lo, hi = int(np.ceil(spec.d_min)), int(np.floor(spec.d_max))
        disps = np.sort(rng.integers(lo, hi + 1, size=spec.num_layers)).astype(float)
    if disps[-1] > spec.d_max:
        raise ValueError(f"layer disparity {disps[-1]} outside [0, {spec.d_max}]")

    d_span = max(spec.d_max - spec.d_min, 1e-9)
    layers = []  # (disparity, texture (3,H,We), mask (H,We))
    for k, d in enumerate(disps):
        tex = _layer_texture(rng, H, We, (d - spec.d_min) / d_span)
        if k == 0:
            mask = np.ones((H, We), dtype=bool)
        else:
            bh = int(rng.integers(H // 4, H // 2 + 1))
            bw = int(rng.integers(W // 5, W // 2 + 1))
            top = int(rng.integers(2, H - bh - 2))
            left = int(rng.integers(2, W - bw - 2)) + pad
            mask = np.zeros((H, We), dtype=bool)
            mask[top:top + bh, left:left + bw] = True
        layers.append((float(d), tex, mask))

    def render(direction):
        """direction: +1 left view, 0 center, -1 right view."""
        img = np.zeros((3, H, W), dtype=np.float32)
        ids = np.full((H, W), -1, dtype=np.int32)
        disp_map = np.zeros((H, W), dtype=np.float32)
        xs = np.arange(W)
        for k, (d, tex, mask) in enumerate(layers):
            shift = direction * d
            # view column x shows scene coordinate x - shift
            src = xs - shift + pad
            if spec.subpixel and shift != int(shift):
                s0 = np.floor(src).astype(int)
                f = (src - s0).astype(np.float32)
                m = (mask[:, s0] * (1 - f) + mask[:, s0 + 1] * f) >= 0.5
                t = tex[:, :, s0] * (1 - f) + tex[:, :, s0 + 1] * f
            else:
                s0 = np.rint(src).astype(int)
                m = mask[:, s0]
                t = tex[:, :, s0]
            img[:, m] = t[:, m]
            ids[m] = k
            disp_map[m] = d
        return img, ids, disp_map

    ic, ids_c, gt = render(0)
    il, ids_l, _ = render(+1)
    ir, ids_r, _ = render(-1)

    # center pixel x with layer k sits at x+d in the left view and x-d in the
    # right view; it is occluded where that location shows a nearer layer
    xs = np.arange(W)[None, :]
    d_c = gt
    pos_l = np.rint(xs + d_c).astype(int)
    pos_r = np.rint(xs - d_c).astype(int)
    rows = np.arange(H)[:, None]
    occ_l = (pos_l > W - 1) | (ids_l[rows, np.clip(pos_l, 0, W - 1)] != ids_c)
    occ_r = (pos_r < 0) | (ids_r[rows, np.clip(pos_r, 0, W - 1)] != ids_c)

    if spec.noise_amplitude > 0:
        for img in (il, ic, ir):
            img += rng.normal(0.0, spec.noise_amplitude,
                              size=img.shape).astype(np.float32)
            np.clip(img, 0.0, 1.0, out=img)

    return TrinocularSample(
        il=il, ic=ic, ir=ir, gt_cl=gt.copy(), gt_cr=gt.copy(),
        occ_l=occ_l, occ_r=occ_r,
        camera=CameraModel(focal=spec.focal, baseline=spec.baseline),
        spec=spec)


def to_binocular(sample, mode):
    """Stereo pair for the trainer; ground truth stays behind (eval only)."""
    if mode == "lc":
        return sample.il.copy(), sample.ic.copy()
    if mode == "cr":
        return sample.ic.copy(), sample.ir.copy()
    raise ValueError(f"mode must be 'lc' or 'cr', got {mode!r}")


# ---------------------------------------------------------------------------
# dataset directory layout: scene_%06d/{il,ic,ir}.ppm, {gt_cl,gt_cr}.pfm,
# {occ_l,occ_r}.pgm, meta.txt


def scene_dir(root, index):
    return os.path.join(root, f"scene_{index:06d}")


def save_scene(sample, path):
    os.makedirs(path, exist_ok=True)
    imageio.write_ppm(os.path.join(path, "il.ppm"), sample.il)
    imageio.write_ppm(os.path.join(path, "ic.ppm"), sample.ic)
    imageio.write_ppm(os.path.join(path, "ir.ppm"), sample.ir)
    imageio.write_pfm(os.path.join(path, "gt_cl.pfm"), sample.gt_cl)
    imageio.write_pfm(os.path.join(path, "gt_cr.pfm"), sample.gt_cr)
    imageio.write_pgm(os.path.join(path, "occ_l.pgm"), sample.occ_l.astype(np.float32))
    imageio.write_pgm(os.path.join(path, "occ_r.pgm"), sample.occ_r.astype(np.float32))
    spec = sample.spec
    with open(os.path.join(path, "meta.txt"), "w") as fh:
        fh.write(f"height = {spec.height}\nwidth = {spec.width}\n"
                 f"num_layers = {spec.num_layers}\n"
                 f"d_min = {spec.d_min!r}\nd_max = {spec.d_max!r}\n"
                 f"noise_amplitude = {spec.noise_amplitude!r}\n"
                 f"subpixel = {int(spec.subpixel)}\n"
                 f"focal = {sample.camera.focal!r}\n"
                 f"baseline = {sample.camera.baseline!r}\n")


def load_scene(path):
    meta = {}
    with open(os.path.join(path, "meta.txt")) as fh:
        for line in fh:
            m = re.match(r"(\w+)\s*=\s*(.+)", line.strip())
            if m:
                meta[m.group(1)] = m.group(2)
    spec = SceneSpec(
        height=int(meta["height"]), width=int(meta["width"]),
        num_layers=int(meta["num_layers"]),
        d_min=float(meta["d_min"]), d_max=float(meta["d_max"]),
        noise_amplitude=float(meta["noise_amplitude"]),
        subpixel=bool(int(meta["subpixel"])),
        focal=float(meta["focal"]), baseline=float(meta["baseline"]))
    return TrinocularSample(
        il=imageio.read_ppm(os.path.join(path, "il.ppm")),
        ic=imageio.read_ppm(os.path.join(path, "ic.ppm")),
        ir=imageio.read_ppm(os.path.join(path, "ir.ppm")),
        gt_cl=imageio.read_pfm(os.path.join(path, "gt_cl.pfm")),
        gt_cr=imageio.read_pfm(os.path.join(path, "gt_cr.pfm")),
        occ_l=imageio.read_pgm(os.path.join(path, "occ_l.pgm")) > 0.5,
        occ_r=imageio.read_pgm(os.path.join(path, "occ_r.pgm")) > 0.5,
        camera=CameraModel(focal=float(meta["focal"]),
                           baseline=float(meta["baseline"])),
        spec=spec)


def generate_dataset(spec, count, seed, root):
    """Write `count` scenes with per-scene seeds derived by counter."""
    for i in range(count):
        sample = generate_scene(spec, seed + i)
        save_scene(sample, scene_dir(root, i))


def load_dataset(root):
    dirs = sorted(d for d in os.listdir(root) if d.startswith("scene_"))
    if not dirs:
        raise ValueError(f"no scene_* directories under {root}")
    return [load_scene(os.path.join(root, d)) for d in dirs]
