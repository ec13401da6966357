"""Interleaved two-phase training with strict gradient routing and Adam.

Each step runs phase 1 (pair plays left+center, updates encoder + left
decoder) and phase 2 (pair plays center+right, updates encoder + right
decoder).  The encoder shares one Adam moment store across both phases.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import numpy as np

from . import model as net
from .autodiff import Tape, Tensor
from .losses import LossWeights, phase1_loss, phase2_loss
from .warp import build_pyramid


class NonFiniteLossError(RuntimeError):
    """Raised when a phase loss turns non-finite; no parameters were updated."""


@dataclass
class TrainPlan:
    epochs: int = 50
    batch_size: int = 4
    learning_rate: float = 1e-4
    seed: int = 0
    augment_flip: bool = True
    augment_jitter: bool = False
    checkpoint_every: int = 10
    debug_routing: bool = False


class AdamState:
    """Per-parameter first/second moments and step counters."""

    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = {n: np.zeros_like(t.data) for n, t in params.tensors.items()}
        self.v = {n: np.zeros_like(t.data) for n, t in params.tensors.items()}
        self.t = {n: 0 for n in params.tensors}


def adam_update(params, grads, state, lr, names):
    """Bias-corrected Adam on `names` only; everything else is untouched."""
    for name in sorted(names):
        g = grads[name]
        p = params.tensors[name]
        if g.shape != p.data.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter "
                             f"{name} shape {p.data.shape}")
        state.t[name] += 1
        t = state.t[name]
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        m_hat = m / (1.0 - state.beta1 ** t)
        v_hat = v / (1.0 - state.beta2 ** t)
        p.data -= (lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(p.data.dtype)


def lr_schedule(plan, epoch):
    """Piecewise-constant: halve at 60% and again at 80% of the plan."""
    if not 0 <= epoch < plan.epochs:
        raise ValueError(f"epoch {epoch} outside [0, {plan.epochs})")
    first = int(plan.epochs * 0.6)
    second = int(plan.epochs * 0.8)
    if epoch < first:
        return plan.learning_rate
    if epoch < second:
        return plan.learning_rate / 2.0
    return plan.learning_rate / 4.0


def _phase(params, adam, image_center, loss_fn, update_sets, lr, phase_name):
    with Tape() as tape:
        outputs = net.forward(params, image_center)
        breakdown = loss_fn(outputs)
    if not np.isfinite(breakdown.total.data):
        raise NonFiniteLossError(
            f"{phase_name} loss is non-finite "
            f"(per-scale: {breakdown.per_scale}); step aborted, no update applied")
    store = tape.backward(breakdown.total)
    grads = {}
    names = set()
    partition = params.partition()
    for key in update_sets:
        names |= partition[key]
    for name in names:
        grads[name] = store.of(params.tensors[name])
    adam_update(params, grads, adam, lr, names)
    return breakdown


def train_step(params, adam, pair, weights, lr=1e-4, debug_routing=False):
    """One interleaved step on a stereo pair {L, R}; returns both breakdowns.

    Phase 1 treats (L, R) as (left, center); phase 2 as (center, right).
    """
    left, right = pair
    if left.shape != right.shape:
        raise ValueError(f"pair shapes differ: {left.shape} vs {right.shape}")
    left = np.ascontiguousarray(left, dtype=np.float32)
    right = np.ascontiguousarray(right, dtype=np.float32)

    # routing contract: the decoder outside each phase stays bit-identical
    snapshot = None
    partition = params.partition()
    if debug_routing:
        snapshot = {n: params.tensors[n].data.copy() for n in params.tensors}

    pyr_l = build_pyramid(Tensor(left))
    pyr_r = build_pyramid(Tensor(right))

    single = params.config.single_decoder
    sets1 = (net.ENCODER, net.LEFT_DECODER)
    sets2 = (net.ENCODER, net.LEFT_DECODER) if single else \
        (net.ENCODER, net.RIGHT_DECODER)

    bd1 = _phase(params, adam, right,  # I^c := R
                 lambda out: phase1_loss(pyr_l, pyr_r, out, weights),
                 sets1, lr, "phase-1")
    if debug_routing and not single:
        for n in partition[net.RIGHT_DECODER]:
            if not np.array_equal(snapshot[n], params.tensors[n].data):
                raise AssertionError(f"phase 1 modified right-decoder param {n}")
        snapshot = {n: params.tensors[n].data.copy() for n in params.tensors}

    bd2 = _phase(params, adam, left,  # I^c := L
                 lambda out: phase2_loss(pyr_l, pyr_r, out, weights),
                 sets2, lr, "phase-2")
    if debug_routing and not single:
        for n in partition[net.LEFT_DECODER]:
            if not np.array_equal(snapshot[n], params.tensors[n].data):
                raise AssertionError(f"phase 2 modified left-decoder param {n}")
    return bd1, bd2


# ---------------------------------------------------------------------------
# data augmentation


def _augment(pair, rng, plan):
    left, right = pair
    if plan.augment_flip and rng.random() < 0.5:
        # mirror and swap roles: the flipped right image becomes the new left
        left, right = right[..., ::-1].copy(), left[..., ::-1].copy()
    if plan.augment_jitter:
        gamma = rng.uniform(0.8, 1.2)
        brightness = rng.uniform(0.8, 1.2)
        color = rng.uniform(0.95, 1.05, size=(3, 1, 1)).astype(np.float32)
        out = []
        for img in (left, right):
            img = np.clip(img, 0.0, 1.0) ** gamma
            img = np.clip(img * brightness * color, 0.0, 1.0)
            out.append(img.astype(np.float32))
        left, right = out
    return left, right


_LOG_COLUMNS = ["step", "epoch", "lr",
                "p1_ap", "p1_ds", "p1_lr", "p1_total",
                "p2_ap", "p2_ds", "p2_lr", "p2_total"]


def train(params, pairs, plan, weights=None, out_dir=None, validate=None):
    """Epoch loop over binocular pairs with seeded shuffling and CSV logging.

    `pairs` is a sequence of (L, R) float image arrays, each (3, H, W).
    `validate`, when given, is called as validate(params, epoch) after every
    epoch and its dict result is appended to val_log.csv.
    """
    if not len(pairs):
        raise ValueError("dataset is empty")
    weights = weights or LossWeights()
    adam = AdamState(params)
    rng = np.random.default_rng(plan.seed)

    log_rows = []
    val_rows = []
    step = 0
    for epoch in range(plan.epochs):
        lr = lr_schedule(plan, epoch)
        order = rng.permutation(len(pairs))
        for start in range(0, len(order), plan.batch_size):
            idx = order[start:start + plan.batch_size]
            batch = [_augment(pairs[i], rng, plan) for i in idx]
            left = np.stack([b[0] for b in batch]).astype(np.float32)
            right = np.stack([b[1] for b in batch]).astype(np.float32)
            bd1, bd2 = train_step(params, adam, (left, right), weights, lr=lr,
                                  debug_routing=plan.debug_routing)
            log_rows.append([step, epoch, lr,
                             bd1.term_total("ap"), bd1.term_total("ds"),
                             bd1.term_total("lr"), bd1.total_value,
                             bd2.term_total("ap"), bd2.term_total("ds"),
                             bd2.term_total("lr"), bd2.total_value])
            step += 1
        if validate is not None:
            record = validate(params, epoch)
            if record:
                val_rows.append({"epoch": epoch, **record})
        if out_dir and plan.checkpoint_every and \
                (epoch + 1) % plan.checkpoint_every == 0:
            net.save_checkpoint(params, os.path.join(out_dir,
                                                     f"checkpoint_ep{epoch + 1}"))

    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        try:
            with open(os.path.join(out_dir, "train_log.csv"), "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(_LOG_COLUMNS)
                writer.writerows(log_rows)
            if val_rows:
                with open(os.path.join(out_dir, "val_log.csv"), "w", newline="") as fh:
                    writer = csv.DictWriter(fh, fieldnames=list(val_rows[0]))
                    writer.writeheader()
                    writer.writerows(val_rows)
            net.save_checkpoint(params, os.path.join(out_dir, "checkpoint_final"))
        except OSError as exc:
            raise OSError(f"failed writing training outputs under {out_dir}: "
                          f"{exc}") from exc
    return params, log_rows
