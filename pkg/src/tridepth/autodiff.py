"""Minimal reverse-mode automatic differentiation over dense numpy tensors.

Only the primitives needed by the depth network and its losses are provided:
elementwise math, reductions, 2D convolution, 2x bilinear upsampling, slicing,
edge padding, channel concatenation and a 3x3 window mean.  Operations record
onto an explicitly managed :class:`Tape`; tensors created outside a tape are
plain constants.
"""

from __future__ import annotations

import itertools

import numpy as np

_ids = itertools.count()


class Tape:
    """Ordered record of operations for one backward pass.

    A tape is single-writer: one training step owns one tape.  Entering the
    tape as a context manager makes it the active recording target.
    """

    _active = None

    def __init__(self):
        self._nodes = []

    def __enter__(self):
        if Tape._active is not None:
            raise RuntimeError("a tape is already active; tapes do not nest")
        Tape._active = self
        return self

    def __exit__(self, *exc):
        Tape._active = None
        return False

    def _record(self, out, parents, backward):
        self._nodes.append((out, parents, backward))

    def backward(self, root):
        """Backpropagate from a scalar root, returning a :class:`Gradients` store."""
        if root.data.shape != ():
            raise ValueError(f"backward root must be scalar, got shape {root.data.shape}")
        grads = {root.id: np.ones((), dtype=root.data.dtype)}
        for out, parents, backward in reversed(self._nodes):
            g = grads.pop(out.id, None)
            if g is None:
                continue
            for parent, pg in zip(parents, backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                acc = grads.get(parent.id)
                grads[parent.id] = pg if acc is None else acc + pg
        return Gradients(grads)


class Gradients:
    """Gradient store keyed by tensor identity; unreachable leaves read as zero."""

    def __init__(self, store):
        self._store = store

    def of(self, tensor):
        g = self._store.get(tensor.id)
        if g is None:
            return np.zeros_like(tensor.data)
        return np.asarray(g, dtype=tensor.data.dtype).reshape(tensor.data.shape)


class Tensor:
    """Dense n-d float array, optionally attached to the recording tape."""

    __slots__ = ("data", "id", "requires_grad")

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data = arr
        self.id = next(_ids)
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype})"

    # arithmetic sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __getitem__(self, key):
        return slice_(self, key)


def _as_tensor(x, like=None):
    if isinstance(x, Tensor):
        return x
    dtype = like.data.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype))


def _make(data, parents, backward):
    """Create an op output, recording it if a tape is active and grads flow."""
    req = any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=req)
    tape = Tape._active
    if tape is not None and req:
        tape._record(out, parents, backward)
    return out


def custom_op(data, parents, backward):
    """Register an externally defined primitive (used by the warp sampler)."""
    return _make(data, parents, backward)


def _unbroadcast(grad, shape):
    """Reduce a gradient back to the shape it was broadcast from."""
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# elementwise ops


def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b, like=a)
    data = a.data + b.data

    def backward(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _make(data, (a, b), backward)


def sub(a, b):
    a, b = _as_tensor(a), _as_tensor(b, like=a)
    data = a.data - b.data

    def backward(g):
        return _unbroadcast(g, a.data.shape), -_unbroadcast(g, b.data.shape)

    return _make(data, (a, b), backward)


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b, like=a)
    data = a.data * b.data

    def backward(g):
        return (_unbroadcast(g * b.data, a.data.shape),
                _unbroadcast(g * a.data, b.data.shape))

    return _make(data, (a, b), backward)


def div(a, b):
    a, b = _as_tensor(a), _as_tensor(b, like=a)
    data = a.data / b.data
    if not np.all(np.isfinite(data)):
        raise FloatingPointError("division produced non-finite values")

    def backward(g):
        return (_unbroadcast(g / b.data, a.data.shape),
                _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    return _make(data, (a, b), backward)


def neg(a):
    a = _as_tensor(a)
    return _make(-a.data, (a,), lambda g: (-g,))


def abs_(a):
    a = _as_tensor(a)
    sign = np.sign(a.data)
    return _make(np.abs(a.data), (a,), lambda g: (g * sign,))


def exp(a):
    a = _as_tensor(a)
    data = np.exp(a.data)
    if not np.all(np.isfinite(data)):
        raise FloatingPointError("exp overflowed to non-finite values")
    return _make(data, (a,), lambda g: (g * data,))


def log(a):
    a = _as_tensor(a)
    if np.any(a.data <= 0):
        raise ValueError("log requires strictly positive input")
    data = np.log(a.data)
    return _make(data, (a,), lambda g: (g / a.data,))


def sigmoid(a):
    a = _as_tensor(a)
    x = a.data
    data = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                    np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    data = data.astype(x.dtype)
    return _make(data, (a,), lambda g: (g * data * (1.0 - data),))


def elu(a, alpha=1.0):
    a = _as_tensor(a)
    x = a.data
    neg_part = alpha * (np.exp(np.minimum(x, 0.0)) - 1.0)
    data = np.where(x > 0, x, neg_part).astype(x.dtype)

    def backward(g):
        return (g * np.where(x > 0, 1.0, neg_part + alpha).astype(x.dtype),)

    return _make(data, (a,), backward)


def clamp(a, lo, hi):
    a = _as_tensor(a)
    data = np.clip(a.data, lo, hi)
    # subgradient: 1 inside the interval, boundary treated as inside
    mask = ((a.data >= lo) & (a.data <= hi)).astype(a.data.dtype)
    return _make(data, (a,), lambda g: (g * mask,))


def mean(a):
    a = _as_tensor(a)
    n = a.data.size
    data = a.data.mean()

    def backward(g):
        return (np.full(a.data.shape, g / n, dtype=a.data.dtype),)

    return _make(data, (a,), backward)


def sum_(a):
    a = _as_tensor(a)
    data = a.data.sum()

    def backward(g):
        return (np.full(a.data.shape, g, dtype=a.data.dtype),)

    return _make(data, (a,), backward)


# ---------------------------------------------------------------------------
# structural ops


def slice_(a, key):
    a = _as_tensor(a)
    data = a.data[key]

    def backward(g):
        out = np.zeros_like(a.data)
        out[key] = g
        return (out,)

    return _make(data, (a,), backward)


def concat(tensors, axis=1):
    tensors = [_as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make(data, tuple(tensors), backward)


def pad2d_edge(a, width=1):
    """Replicate-pad the two trailing (spatial) axes by `width` pixels."""
    a = _as_tensor(a)
    pad = [(0, 0)] * (a.data.ndim - 2) + [(width, width), (width, width)]
    data = np.pad(a.data, pad, mode="edge")
    w = width

    def backward(g):
        # adjoint of edge padding: fold border bands back onto the edge cells
        g = g.copy()
        g[..., w, :] += g[..., :w, :].sum(axis=-2)
        g[..., -w - 1, :] += g[..., -w:, :].sum(axis=-2)
        core = g[..., w:-w, :]
        core[..., w] += core[..., :w].sum(axis=-1)
        core[..., -w - 1] += core[..., -w:].sum(axis=-1)
        return (core[..., w:-w],)

    return _make(data, (a,), backward)


def box_mean3(a):
    """Per-pixel 3x3 window mean with edge replication (same spatial size)."""
    padded = pad2d_edge(a, 1)
    h = a.data.shape[-2]
    w = a.data.shape[-1]
    acc = None
    for i in range(3):
        for j in range(3):
            piece = padded[..., i:i + h, j:j + w]
            acc = piece if acc is None else acc + piece
    return acc * (1.0 / 9.0)


# ---------------------------------------------------------------------------
# convolution


def conv2d(x, k, stride=1, padding=0):
    """Cross-correlation of NCHW input with OIHW kernel."""
    x, k = _as_tensor(x), _as_tensor(k)
    if x.data.ndim != 4 or k.data.ndim != 4:
        raise ValueError(f"conv2d expects 4-d input and kernel, got {x.data.ndim}-d "
                         f"input and {k.data.ndim}-d kernel")
    B, Cin, H, W = x.data.shape
    Cout, Kin, kH, kW = k.data.shape
    if Kin != Cin:
        raise ValueError(f"conv2d channel mismatch: input has {Cin} channels, "
                         f"kernel expects {Kin}")
    if stride < 1:
        raise ValueError("conv2d stride must be >= 1")
    Hp, Wp = H + 2 * padding, W + 2 * padding
    if kH > Hp or kW > Wp:
        raise ValueError(f"conv2d kernel {kH}x{kW} exceeds padded extents {Hp}x{Wp}")
    Ho = (Hp - kH) // stride + 1
    Wo = (Wp - kW) // stride + 1

    # the convolution is a sum over the kH*kW taps of channel-mixing matmuls
    # on shifted views; cheaper than im2col on one core (no 9x column copy)
    # im2col: one wide GEMM (K = Cin*kH*kW) beats per-tap skinny matmuls on a
    # single core by a wide margin; the 9x column copy is the price
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (kH, kW), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]  # B,Cin,Ho,Wo,kH,kW
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(
        B * Ho * Wo, Cin * kH * kW)
    kflat = k.data.reshape(Cout, Cin * kH * kW)
    out = (cols @ kflat.T).reshape(B, Ho, Wo, Cout).transpose(0, 3, 1, 2)

    def backward(g):
        gflat = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(B * Ho * Wo, Cout)
        gk = (gflat.T @ cols).reshape(k.data.shape)
        gcols = (gflat @ kflat).reshape(B, Ho, Wo, Cin, kH, kW)
        gxp = np.zeros((B, Cin, Hp, Wp), dtype=x.data.dtype)
        for i in range(kH):
            for j in range(kW):
                gxp[:, :, i:i + stride * Ho:stride, j:j + stride * Wo:stride] += \
                    gcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        gx = gxp[:, :, padding:padding + H, padding:padding + W] if padding else gxp
        return gx, gk

    return _make(np.ascontiguousarray(out), (x, k), backward)


# ---------------------------------------------------------------------------
# bilinear 2x upsampling
#
# Output pixel centers map to input coordinates via (o + 0.5)/2 - 0.5, clamped.
# With that alignment even outputs read 0.25*x[i-1] + 0.75*x[i] and odd outputs
# 0.75*x[i] + 0.25*x[i+1], which keeps forward and adjoint pure slice work.


def _up1d(x):
    n = x.shape[-1]
    y = np.empty(x.shape[:-1] + (2 * n,), dtype=x.dtype)
    y[..., 0::2] = x
    if n > 1:
        y[..., 2::2] = 0.25 * x[..., :-1] + 0.75 * x[..., 1:]
        y[..., 1:-1:2] = 0.75 * x[..., :-1] + 0.25 * x[..., 1:]
    y[..., -1] = x[..., -1]
    return y


def _up1d_adj(g):
    n = g.shape[-1] // 2
    gx = np.zeros(g.shape[:-1] + (n,), dtype=g.dtype)
    gx[..., 0] += g[..., 0]
    if n > 1:
        gx[..., 1:] += 0.75 * g[..., 2::2]
        gx[..., :-1] += 0.25 * g[..., 2::2]
        gx[..., :-1] += 0.75 * g[..., 1:-1:2]
        gx[..., 1:] += 0.25 * g[..., 1:-1:2]
    gx[..., -1] += g[..., -1]
    return gx


def upsample2x(a):
    a = _as_tensor(a)
    if a.data.ndim != 4:
        raise ValueError(f"upsample2x expects a 4-d tensor, got {a.data.ndim}-d")
    data = _up1d(np.swapaxes(_up1d(a.data), -1, -2))
    data = np.swapaxes(data, -1, -2)

    def backward(g):
        gt = np.swapaxes(_up1d_adj(np.swapaxes(g, -1, -2)), -1, -2)
        return (_up1d_adj(gt),)

    return _make(np.ascontiguousarray(data), (a,), backward)


# ---------------------------------------------------------------------------
# gradient checking


def finite_diff_check(f, x, eps=1e-5):
    """Worst relative error between backward() and central finite differences.

    `f` maps a tensor to a scalar tensor and must be deterministic.  The
    relative error denominator is max(|analytic|, |numeric|, 1e-8).
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    leaf = Tensor(x.data.copy(), requires_grad=True)
    with Tape() as tape:
        y = f(leaf)
    if not np.isfinite(y.data):
        raise FloatingPointError("f(x) is not finite")
    analytic = tape.backward(y).of(leaf)

    numeric = np.zeros_like(leaf.data)
    flat = leaf.data.reshape(-1)
    nflat = numeric.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = f(Tensor(leaf.data)).data
        flat[i] = orig - eps
        lo = f(Tensor(leaf.data)).data
        flat[i] = orig
        nflat[i] = (hi - lo) / (2 * eps)

    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(np.abs(analytic - numeric).__truediv__(denom).max())
