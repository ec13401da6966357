"""Structured text run configuration: bracketed sections, key = value lines.

Unknown sections or keys are rejected; every run echoes its fully-resolved
configuration into the output directory so results are reproducible.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass

from .losses import LossWeights
from .model import NetworkConfig
from .synthdata import SceneSpec
from .trainer import TrainPlan
from .viewsynth import SgmParams


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _int_tuple(text):
    return tuple(int(p) for p in text.replace(",", " ").split())


# section -> key -> (parser, target attribute)
_SCHEMA = {
    "scene": {
        "height": int, "width": int, "num_layers": int,
        "d_min": float, "d_max": float, "noise_amplitude": float,
        "subpixel": _bool, "focal": float, "baseline": float,
    },
    "network": {
        "height": int, "width": int,
        "enc_channels": _int_tuple, "dec_channels": _int_tuple,
        "dmax_frac": float, "seed": int, "single_decoder": _bool,
    },
    "train": {
        "epochs": int, "batch_size": int, "learning_rate": float,
        "seed": int, "augment_flip": _bool, "augment_jitter": _bool,
        "checkpoint_every": int, "debug_routing": _bool,
    },
    "loss": {
        "beta_ap": float, "beta_ds": float, "beta_lcr": float,
        "alpha": float, "scale_attenuation": _bool,
        "use_center_consistency": _bool, "beta_cc": float,
    },
    "sgm": {
        "max_disparity": int, "census_window": int, "p1": int, "p2": int,
        "paths": int, "uniqueness_check": _bool,
    },
}


@dataclass
class RunConfig:
    scene: SceneSpec
    network: NetworkConfig
    train: TrainPlan
    loss: LossWeights
    sgm: SgmParams


def _build(cls, values):
    return cls(**values)


def load_config(path=None):
    """Parse a config file; None yields all defaults."""
    overrides = {section: {} for section in _SCHEMA}
    if path is not None:
        parser = configparser.ConfigParser()
        read = parser.read(path)
        if not read:
            raise FileNotFoundError(f"config file not found: {path}")
        for section in parser.sections():
            if section not in _SCHEMA:
                raise ValueError(f"unknown config section [{section}]")
            for key, raw in parser.items(section):
                if key not in _SCHEMA[section]:
                    raise ValueError(f"unknown key {key!r} in section [{section}]")
                overrides[section][key] = _SCHEMA[section][key](raw)
    return RunConfig(
        scene=_build(SceneSpec, overrides["scene"]),
        network=_build(NetworkConfig, overrides["network"]),
        train=_build(TrainPlan, overrides["train"]),
        loss=_build(LossWeights, overrides["loss"]),
        sgm=_build(SgmParams, overrides["sgm"]),
    )


def echo_config(cfg, path):
    """Write the fully-resolved configuration in the input format."""
    sections = {
        "scene": cfg.scene, "network": cfg.network, "train": cfg.train,
        "loss": cfg.loss, "sgm": cfg.sgm,
    }
    lines = []
    for name, obj in sections.items():
        lines.append(f"[{name}]")
        for key in _SCHEMA[name]:
            value = getattr(obj, key)
            if isinstance(value, tuple):
                value = ",".join(map(str, value))
            elif isinstance(value, bool):
                value = int(value)
            lines.append(f"{key} = {value}")
        lines.append("")
    with open(path, "w") as fh:
        fh.write("\n".join(lines))
