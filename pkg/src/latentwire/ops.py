"""Layer forward/backward primitives.

Every forward op returns ``(output, cache)``; ``backward(cache, grad)``
dispatches on the cache kind and returns ``(input_grad, param_grads)``.
Spatial tensors are channels-last ``(H, W, C)``; every op also accepts a
leading batch dimension. All math preserves the input dtype, so suites that
need double precision simply pass float64 arrays.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import CacheError, InvalidGeometryError, ShapeMismatchError

ACTIVATIONS = ("relu", "sigmoid", "softmax")


class LayerCache:
    """Values saved by one forward call, consumed by at most one backward."""

    __slots__ = ("kind", "data", "consumed")

    def __init__(self, kind, **data):
        self.kind = kind
        self.data = data
        self.consumed = False

    def take(self):
        if self.consumed:
            raise CacheError(f"{self.kind} cache already consumed")
        self.consumed = True
        return self.data


def _as_batch(x, sample_ndim):
    """Promote a single sample to a batch of one; report whether we did."""
    if x.ndim == sample_ndim:
        return x[None, ...], True
    if x.ndim == sample_ndim + 1:
        return x, False
    raise ShapeMismatchError(
        f"expected rank {sample_ndim} or {sample_ndim + 1}, got {x.ndim}"
    )


def _same_pad(size, kernel, stride):
    out = -(-size // stride)  # ceil
    total = max((out - 1) * stride + kernel - size, 0)
    return total // 2, total - total // 2


def conv2d(x, w, b, stride=1, padding="valid"):
    """2-D cross-correlation with per-filter bias.

    x: (H,W,C) or (N,H,W,C); w: (K,K,C,F); b: (F,).
    """
    if w.ndim != 4 or w.shape[0] != w.shape[1]:
        raise ShapeMismatchError(f"conv weights must be (K,K,C,F), got {w.shape}")
    xb, squeeze = _as_batch(x, 3)
    n, h, wd, c = xb.shape
    k, _, wc, f = w.shape
    if wc != c:
        raise ShapeMismatchError(f"input has {c} channels, weights expect {wc}")
    if b.shape != (f,):
        raise ShapeMismatchError(f"bias shape {b.shape} != ({f},)")
    if padding == "same":
        pt, pb = _same_pad(h, k, stride)
        pl, pr = _same_pad(wd, k, stride)
    elif padding == "valid":
        pt = pb = pl = pr = 0
    else:
        raise ValueError(f"unknown padding {padding!r}")
    if k > h + pt + pb or k > wd + pl + pr:
        raise InvalidGeometryError(f"kernel {k} exceeds padded input {h}x{wd}")
    xp = np.pad(xb, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
    ho = (xp.shape[1] - k) // stride + 1
    wo = (xp.shape[2] - k) // stride + 1
    if ho < 1 or wo < 1:
        raise InvalidGeometryError(f"conv output {ho}x{wo} would be empty")
    if c * k * k <= 72:
        # narrow input: one contraction over the window view is fastest
        win = sliding_window_view(xp, (k, k), axis=(1, 2))[:, ::stride, ::stride]
        y = np.einsum("nhwckl,klcf->nhwf", win, w, optimize=True)
    else:
        # wide input: accumulate k*k shifted GEMMs, no window materialization
        y = np.zeros((xb.shape[0], ho, wo, f), dtype=xb.dtype)
        for a in range(k):
            for bb in range(k):
                xs = _shift_slice(xp, a, bb, ho, wo, stride)
                y += xs @ w[a, bb]
    y += b
    cache = LayerCache(
        "conv2d", xp=xp, w=w, stride=stride, out_hw=(ho, wo),
        pads=(pt, pb, pl, pr), in_shape=xb.shape, squeeze=squeeze,
    )
    return (y[0] if squeeze else y), cache


def _shift_slice(xp, a, b, ho, wo, stride):
    return xp[:, a : a + (ho - 1) * stride + 1 : stride,
              b : b + (wo - 1) * stride + 1 : stride, :]


def _conv2d_backward(data, g):
    xp, w, stride = data["xp"], data["w"], data["stride"]
    pt, _, pl, _ = data["pads"]
    n, h, wd, c = data["in_shape"]
    k = w.shape[0]
    ho, wo = data["out_hw"]
    gb = g[None, ...] if data["squeeze"] else g
    db = gb.sum(axis=(0, 1, 2))
    dw = np.empty_like(w)
    dxp = np.zeros_like(xp)
    wide_in = c > w.shape[3]  # let einsum buffer the smaller operand
    for a in range(k):
        for bb in range(k):
            xs = _shift_slice(xp, a, bb, ho, wo, stride)
            if wide_in:
                dw[a, bb] = np.einsum("nhwc,nhwf->cf", xs, gb, optimize=True)
            else:
                dw[a, bb] = np.tensordot(xs, gb, axes=([0, 1, 2], [0, 1, 2]))
            _shift_slice(dxp, a, bb, ho, wo, stride)[...] += gb @ w[a, bb].T
    dx = dxp[:, pt : pt + h, pl : pl + wd]
    if data["squeeze"]:
        dx = dx[0]
    return dx, {"w": dw, "b": db}


def maxpool2d(x, pool, stride):
    """Max pooling over pool x pool windows; cache records argmax positions."""
    xb, squeeze = _as_batch(x, 3)
    n, h, wd, c = xb.shape
    if pool > h or pool > wd:
        raise InvalidGeometryError(f"pool {pool} exceeds input {h}x{wd}")
    win = sliding_window_view(xb, (pool, pool), axis=(1, 2))[:, ::stride, ::stride]
    ho, wo = win.shape[1], win.shape[2]
    flat = win.reshape(n, ho, wo, c, pool * pool)
    idx = flat.argmax(axis=-1)
    y = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]
    cache = LayerCache(
        "maxpool2d", idx=idx, pool=pool, stride=stride,
        in_shape=xb.shape, squeeze=squeeze,
    )
    return (y[0] if squeeze else y), cache


def _maxpool2d_backward(data, g):
    idx, pool, stride = data["idx"], data["pool"], data["stride"]
    n, h, wd, c = data["in_shape"]
    gb = g[None, ...] if data["squeeze"] else g
    ho, wo = idx.shape[1], idx.shape[2]
    dx = np.zeros((n, h, wd, c), dtype=gb.dtype)
    ni = np.arange(n)[:, None, None, None]
    ii = np.arange(ho)[None, :, None, None]
    ji = np.arange(wo)[None, None, :, None]
    ci = np.arange(c)[None, None, None, :]
    rows = ii * stride + idx // pool
    cols = ji * stride + idx % pool
    np.add.at(dx, (ni, rows, cols, ci), gb)
    if data["squeeze"]:
        dx = dx[0]
    return dx, None


def upsample2d(x, factor):
    """Nearest-neighbour upsampling by an integer factor."""
    if factor < 1:
        raise InvalidGeometryError(f"upsample factor must be >= 1, got {factor}")
    xb, squeeze = _as_batch(x, 3)
    y = xb.repeat(factor, axis=1).repeat(factor, axis=2)
    cache = LayerCache("upsample2d", factor=factor, in_shape=xb.shape, squeeze=squeeze)
    return (y[0] if squeeze else y), cache


def _upsample2d_backward(data, g):
    f = data["factor"]
    n, h, wd, c = data["in_shape"]
    gb = g[None, ...] if data["squeeze"] else g
    dx = gb.reshape(n, h, f, wd, f, c).sum(axis=(2, 4))
    if data["squeeze"]:
        dx = dx[0]
    return dx, None


def dense(x, w, b):
    """Affine map x @ w + b; x is (D,) or (N,D), w is (D,M)."""
    xb, squeeze = _as_batch(x, 1)
    if w.ndim != 2 or xb.shape[1] != w.shape[0]:
        raise ShapeMismatchError(f"dense input {xb.shape[1]} vs weights {w.shape}")
    if b.shape != (w.shape[1],):
        raise ShapeMismatchError(f"bias shape {b.shape} != ({w.shape[1]},)")
    y = xb @ w + b
    cache = LayerCache("dense", x=xb, w=w, squeeze=squeeze)
    return (y[0] if squeeze else y), cache


def _dense_backward(data, g):
    xb, w = data["x"], data["w"]
    gb = g[None, ...] if data["squeeze"] else g
    dw = xb.T @ gb
    db = gb.sum(axis=0)
    dx = gb @ w.T
    if data["squeeze"]:
        dx = dx[0]
    return dx, {"w": dw, "b": db}


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(x, axis=-1):
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def activation(x, kind):
    if kind == "relu":
        y = np.maximum(x, 0)
        cache = LayerCache("activation", fn=kind, x=x)
    elif kind == "sigmoid":
        y = _sigmoid(x)
        cache = LayerCache("activation", fn=kind, y=y)
    elif kind == "softmax":
        y = softmax(x, axis=-1)
        cache = LayerCache("activation", fn=kind, y=y)
    else:
        raise ValueError(f"unknown activation {kind!r}")
    return y, cache


def _activation_backward(data, g):
    kind = data["fn"]
    if kind == "relu":
        dx = g * (data["x"] > 0)
    elif kind == "sigmoid":
        y = data["y"]
        dx = g * y * (1.0 - y)
    else:  # softmax along last axis
        y = data["y"]
        dx = (g - (g * y).sum(axis=-1, keepdims=True)) * y
    return dx, None


def dropout(x, rate, rng=None, training=False):
    """Inverted dropout: survivors scaled by 1/(1-rate); inference is identity."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0,1), got {rate}")
    if not training or rate == 0.0:
        return x, LayerCache("dropout", mask=None, scale=1.0)
    if rng is None:
        raise ValueError("training-mode dropout needs an rng")
    mask = rng.random(x.shape) >= rate
    scale = 1.0 / (1.0 - rate)
    y = x * mask * np.asarray(scale, dtype=x.dtype)
    return y, LayerCache("dropout", mask=mask, scale=scale)


def _dropout_backward(data, g):
    if data["mask"] is None:
        return g, None
    return g * data["mask"] * np.asarray(data["scale"], dtype=g.dtype), None


def flatten(x, sample_ndim=3):
    xb, squeeze = _as_batch(x, sample_ndim) if x.ndim != 1 else (x[None], True)
    y = xb.reshape(xb.shape[0], -1)
    cache = LayerCache("flatten", in_shape=xb.shape, squeeze=squeeze)
    return (y[0] if squeeze else y), cache


def _flatten_backward(data, g):
    gb = g[None, ...] if data["squeeze"] else g
    dx = gb.reshape(data["in_shape"])
    return (dx[0] if data["squeeze"] else dx), None


_BACKWARD = {
    "conv2d": _conv2d_backward,
    "maxpool2d": _maxpool2d_backward,
    "upsample2d": _upsample2d_backward,
    "dense": _dense_backward,
    "activation": _activation_backward,
    "dropout": _dropout_backward,
    "flatten": _flatten_backward,
}


def backward(cache, grad):
    """Chain-rule step for one layer.

    Returns ``(input_grad, param_grads)`` where param_grads is None for
    parameter-free layers and a dict with keys matching the forward
    parameters otherwise. A cache may be consumed once.
    """
    if not isinstance(cache, LayerCache):
        raise CacheError("backward needs a LayerCache from a forward call")
    return _BACKWARD[cache.kind](cache.take(), grad)
