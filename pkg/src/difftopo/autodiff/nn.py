"""Layer primitives: dense affine map, 2D convolution and transposed convolution.

Feature maps are channels-first ``(C, H, W)`` with no batch axis.  Both
convolutions are cross-correlations; the transposed convolution's pullback
with respect to its input is the stride-``s`` correlation it is the exact
linear transpose of.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .ops import ShapeError
from .tape import Tensor, as_tensor, record, register_pullback


def dense(x, w, b) -> Tensor:
    """``w @ x + b`` with ``w`` of shape (out, in)."""
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    if x.data.ndim != 1 or w.data.ndim != 2 or w.shape[1] != x.shape[0] or b.shape != (w.shape[0],):
        raise ShapeError(
            f"dense: x {x.shape}, w {w.shape}, b {b.shape} do not compose")
    return record("dense", (x, w, b), w.data @ x.data + b.data, {"x": x.data, "w": w.data})


@register_pullback("dense")
def _dense_pb(g, s):
    return s["w"].T @ g, np.outer(g, s["x"]), g.copy()


def conv2d(x, w, b=None, padding: int = 0) -> Tensor:
    """Stride-1 cross-correlation.

    x: (C, H, W), w: (O, C, kh, kw), b: (O,) -> (O, H + 2p - kh + 1, W + 2p - kw + 1)
    """
    x, w = as_tensor(x), as_tensor(w)
    b = as_tensor(np.zeros(w.shape[0]) if b is None else b)
    if x.data.ndim != 3 or w.data.ndim != 4 or w.shape[1] != x.shape[0] or b.shape != (w.shape[0],):
        raise ShapeError(f"conv2d: x {x.shape}, w {w.shape}, b {b.shape} do not compose")
    p = int(padding)
    kh, kw = w.shape[2:]
    xp = np.pad(x.data, ((0, 0), (p, p), (p, p)))
    if xp.shape[1] < kh or xp.shape[2] < kw:
        raise ShapeError(f"conv2d: kernel {w.shape[2:]} larger than padded input {xp.shape[1:]}")
    win = sliding_window_view(xp, (kh, kw), axis=(1, 2))  # (C, H', W', kh, kw)
    y = np.einsum("chwij,ocij->ohw", win, w.data, optimize=True) + b.data[:, None, None]
    return record("conv2d", (x, w, b), y,
                  {"xp": xp, "w": w.data, "p": p, "xshape": x.shape})


@register_pullback("conv2d")
def _conv2d_pb(g, s):
    xp, w, p = s["xp"], s["w"], s["p"]
    kh, kw = w.shape[2:]
    ho, wo = g.shape[1:]
    win = sliding_window_view(xp, (kh, kw), axis=(1, 2))
    gw = np.einsum("ohw,chwij->ocij", g, win, optimize=True)
    gxp = np.zeros_like(xp)
    for i in range(kh):
        for j in range(kw):
            gxp[:, i:i + ho, j:j + wo] += np.einsum("ohw,oc->chw", g, w[:, :, i, j])
    C, H, W = s["xshape"]
    gx = gxp[:, p:p + H, p:p + W]
    return gx, gw, g.sum(axis=(1, 2))


def conv_transpose2d(x, w, b=None, stride: int = 2, padding: int = 1) -> Tensor:
    """Transposed convolution.

    x: (C, H, W), w: (C, O, k, k), b: (O,) -> (O, (H-1)s - 2p + k, (W-1)s - 2p + k).
    With k = 4, s = 2, p = 1 the spatial size doubles.
    """
    x, w = as_tensor(x), as_tensor(w)
    b = as_tensor(np.zeros(w.shape[1]) if b is None else b)
    if x.data.ndim != 3 or w.data.ndim != 4 or w.shape[0] != x.shape[0] or b.shape != (w.shape[1],):
        raise ShapeError(
            f"conv_transpose2d: x {x.shape}, w {w.shape}, b {b.shape} do not compose")
    s_, p = int(stride), int(padding)
    C, H, W = x.shape
    kh, kw = w.shape[2:]
    full = np.zeros((w.shape[1], (H - 1) * s_ + kh, (W - 1) * s_ + kw))
    for i in range(kh):
        for j in range(kw):
            full[:, i:i + s_ * (H - 1) + 1:s_, j:j + s_ * (W - 1) + 1:s_] += np.einsum(
                "chw,co->ohw", x.data, w.data[:, :, i, j])
    y = full[:, p:full.shape[1] - p, p:full.shape[2] - p] + b.data[:, None, None]
    if y.shape[1] <= 0 or y.shape[2] <= 0:
        raise ShapeError(f"conv_transpose2d: padding {p} leaves an empty output")
    return record("conv_transpose2d", (x, w, b), np.ascontiguousarray(y),
                  {"x": x.data, "w": w.data, "s": s_, "p": p})


@register_pullback("conv_transpose2d")
def _conv_transpose2d_pb(g, s):
    x, w, st, p = s["x"], s["w"], s["s"], s["p"]
    C, H, W = x.shape
    kh, kw = w.shape[2:]
    gf = np.pad(g, ((0, 0), (p, p), (p, p)))
    gx = np.zeros_like(x)
    gw = np.zeros_like(w)
    for i in range(kh):
        for j in range(kw):
            gs = gf[:, i:i + st * (H - 1) + 1:st, j:j + st * (W - 1) + 1:st]
            gx += np.einsum("ohw,co->chw", gs, w[:, :, i, j])
            gw[:, :, i, j] = np.einsum("chw,ohw->co", x, gs)
    return gx, gw, g.sum(axis=(1, 2))
