"""Miniature shared-encoder / dual-decoder disparity network.

The encoder applies four stride-2 3x3 convolutions with ELU.  Each decoder
mirrors it with 2x bilinear upsampling, channel-concatenated skip connections
from the encoder stage at the same resolution, and a 2-channel sigmoid head at
the four output scales (1/8 up to full resolution).  Head channel 0 is the
center-aligned map (cl or cr), channel 1 the side-aligned map (lc or rc).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .warp import DisparityMap

ENCODER = "encoder"
LEFT_DECODER = "decoder_l"
RIGHT_DECODER = "decoder_r"


@dataclass
class NetworkConfig:
    height: int = 64
    width: int = 128
    enc_channels: tuple = (16, 32, 64, 128)
    dec_channels: tuple = (64, 32, 16, 16)
    dmax_frac: float = 0.3
    seed: int = 0
    single_decoder: bool = False

    def __post_init__(self):
        if self.height % 8 or self.width % 8:
            raise ValueError(f"extents {self.height}x{self.width} must be "
                             "divisible by 8")
        if not 0.0 < self.dmax_frac < 1.0:
            raise ValueError("dmax_frac must lie in (0, 1)")
        if len(self.enc_channels) != 4 or len(self.dec_channels) != 4:
            raise ValueError("encoder and decoder need 4 stages each")
        self.enc_channels = tuple(int(c) for c in self.enc_channels)
        self.dec_channels = tuple(int(c) for c in self.dec_channels)


class NetworkParams:
    """Named float32 parameter tensors plus the config that shaped them.

    Tensors are keyed by slash-separated names whose first component selects
    the routing partition (encoder / decoder_l / decoder_r).  The instance
    also carries a forward counter used by post-processing tests.
    """

    def __init__(self, config, tensors):
        self.config = config
        self.tensors = tensors  # name -> Tensor (requires_grad)
        self.forward_count = 0

    def names(self):
        return list(self.tensors)

    def partition(self):
        sets = {ENCODER: set(), LEFT_DECODER: set(), RIGHT_DECODER: set()}
        for name in self.tensors:
            sets[name.split("/", 1)[0]].add(name)
        return sets


def _head_channels(config):
    return 4 if config.single_decoder else 2


def _shapes(config):
    """Parameter name -> shape for the configured topology, in a fixed order."""
    shapes = {}
    cin = 3
    for i, cout in enumerate(config.enc_channels):
        shapes[f"{ENCODER}/conv{i}/weight"] = (cout, cin, 3, 3)
        shapes[f"{ENCODER}/conv{i}/bias"] = (1, cout, 1, 1)
        cin = cout
    decoders = [LEFT_DECODER] if config.single_decoder else \
        [LEFT_DECODER, RIGHT_DECODER]
    e = config.enc_channels
    skips = [e[2], e[1], e[0], 0]  # encoder channels at 1/8, 1/4, 1/2, full
    for dec in decoders:
        cin = e[3]
        for s, cout in enumerate(config.dec_channels):
            shapes[f"{dec}/up{s}/weight"] = (cout, cin + skips[s], 3, 3)
            shapes[f"{dec}/up{s}/bias"] = (1, cout, 1, 1)
            shapes[f"{dec}/head{s}/weight"] = (_head_channels(config), cout, 3, 3)
            shapes[f"{dec}/head{s}/bias"] = (1, _head_channels(config), 1, 1)
            cin = cout
    return shapes


def init_network(config):
    """Seed-deterministic init: fan-in scaled uniform weights, zero biases."""
    rng = np.random.default_rng(config.seed)
    tensors = {}
    for name, shape in _shapes(config).items():
        if name.endswith("/bias"):
            data = np.zeros(shape, dtype=np.float32)
        else:
            fan_in = int(np.prod(shape[1:]))
            limit = float(np.sqrt(1.0 / fan_in))
            data = rng.uniform(-limit, limit, size=shape).astype(np.float32)
        tensors[name] = Tensor(data, requires_grad=True)
    return NetworkParams(config, tensors)


def param_partition(params):
    """The three disjoint name sets used by the trainer's gradient routing."""
    return params.partition()


def parameter_count(params):
    return sum(t.data.size for t in params.tensors.values())


@dataclass
class NetworkOutputs:
    """Four disparity pyramids in pixel units, level 0 = full resolution."""

    maps: dict = field(default_factory=dict)  # tag -> [DisparityMap] * levels

    def __getitem__(self, tag):
        return self.maps[tag]

    def level0(self, tag):
        return self.maps[tag][0]


def _conv(params, name, x, stride):
    w = params.tensors[f"{name}/weight"]
    b = params.tensors[f"{name}/bias"]
    return ad.conv2d(x, w, stride=stride, padding=1) + b


def _decode(params, dec, feats, config):
    """Run one decoder over the shared features; returns raw sigmoid heads,
    deepest scale first."""
    x = feats[3]
    heads = []
    for s in range(4):
        x = ad.upsample2x(x)
        skip = feats[2 - s] if s < 3 else None
        if skip is not None:
            # odd skip extents (legal: only /8 divisibility is required)
            # make the doubled extent overshoot by one; crop to match
            sh, sw = skip.data.shape[2:]
            if x.data.shape[2:] != (sh, sw):
                x = x[:, :, :sh, :sw]
            x = ad.concat([x, skip], axis=1)
        x = ad.elu(_conv(params, f"{dec}/up{s}", x, stride=1))
        heads.append(ad.sigmoid(_conv(params, f"{dec}/head{s}", x, stride=1)))
    return heads


def forward(params, image):
    """Single forward pass producing all four tagged disparity pyramids."""
    config = params.config
    x = image if isinstance(image, Tensor) else Tensor(image)
    if x.data.ndim != 4 or x.data.shape[1] != 3 or \
            x.data.shape[2] != config.height or x.data.shape[3] != config.width:
        raise ValueError(f"input shape {x.data.shape} does not match configured "
                         f"(B,3,{config.height},{config.width})")
    params.forward_count += 1

    feats = []
    h = x
    for i in range(4):
        h = ad.elu(_conv(params, f"{ENCODER}/conv{i}", h, stride=2))
        feats.append(h)

    if config.single_decoder:
        heads = _decode(params, LEFT_DECODER, feats, config)
        per_tag_raw = {tag: [head[:, k:k + 1] for head in heads]
                       for k, tag in enumerate(("cl", "lc", "cr", "rc"))}
    else:
        heads_l = _decode(params, LEFT_DECODER, feats, config)
        heads_r = _decode(params, RIGHT_DECODER, feats, config)
        per_tag_raw = {
            "cl": [h[:, 0:1] for h in heads_l],
            "lc": [h[:, 1:2] for h in heads_l],
            "cr": [h[:, 0:1] for h in heads_r],
            "rc": [h[:, 1:2] for h in heads_r],
        }

    maps = {}
    for tag, raws in per_tag_raw.items():
        pyramid = []
        for level in range(4):
            raw = raws[3 - level]  # heads come deepest-first
            w_level = config.width >> level
            disp = raw * float(config.dmax_frac * w_level)
            pyramid.append(DisparityMap(disp, tag=tag, level=level))
        maps[tag] = pyramid
    return NetworkOutputs(maps=maps)


# ---------------------------------------------------------------------------
# checkpoint I/O: text manifest (name, shape, byte offset) + one little-endian
# binary32 blob; round-trips bit-exactly.

_MANIFEST = "manifest.txt"
_BLOB = "weights.bin"


def save_checkpoint(params, path):
    os.makedirs(path, exist_ok=True)
    config = params.config
    lines = [
        f"# height {config.height}",
        f"# width {config.width}",
        f"# enc_channels {','.join(map(str, config.enc_channels))}",
        f"# dec_channels {','.join(map(str, config.dec_channels))}",
        f"# dmax_frac {config.dmax_frac!r}",
        f"# seed {config.seed}",
        f"# single_decoder {int(config.single_decoder)}",
    ]
    offset = 0
    chunks = []
    for name in params.tensors:
        t = params.tensors[name]
        data = np.ascontiguousarray(t.data, dtype="<f4")
        lines.append(f"{name} {'x'.join(map(str, t.data.shape))} {offset}")
        chunks.append(data.tobytes())
        offset += data.nbytes
    with open(os.path.join(path, _MANIFEST), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    with open(os.path.join(path, _BLOB), "wb") as fh:
        fh.write(b"".join(chunks))


def load_checkpoint(path):
    manifest = os.path.join(path, _MANIFEST)
    with open(manifest) as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    header = {}
    entries = []
    for ln in lines:
        if ln.startswith("# "):
            key, value = ln[2:].split(" ", 1)
            header[key] = value
        else:
            name, shape, offset = ln.rsplit(" ", 2)
            entries.append((name, tuple(int(s) for s in shape.split("x")),
                            int(offset)))
    config = NetworkConfig(
        height=int(header["height"]),
        width=int(header["width"]),
        enc_channels=tuple(int(c) for c in header["enc_channels"].split(",")),
        dec_channels=tuple(int(c) for c in header["dec_channels"].split(",")),
        dmax_frac=float(header["dmax_frac"]),
        seed=int(header["seed"]),
        single_decoder=bool(int(header.get("single_decoder", "0"))),
    )
    blob = open(os.path.join(path, _BLOB), "rb").read()
    tensors = {}
    for name, shape, offset in entries:
        count = int(np.prod(shape))
        data = np.frombuffer(blob, dtype="<f4", count=count, offset=offset)
        tensors[name] = Tensor(data.reshape(shape).copy(), requires_grad=True)
    return NetworkParams(config, tensors)
