"""Differentiable elementwise, reduction and linear-algebra primitives."""
from __future__ import annotations

import numpy as np

from .tape import Tensor, as_tensor, record, register_pullback


class ShapeError(ValueError):
    pass


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> tuple:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# --- binary elementwise -----------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)
    return record("add", (a, b), a.data + b.data, {"sa": a.shape, "sb": b.shape})


@register_pullback("add")
def _add_pb(g, s):
    return _unbroadcast(g, s["sa"]), _unbroadcast(g, s["sb"])


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)
    return record("sub", (a, b), a.data - b.data, {"sa": a.shape, "sb": b.shape})


@register_pullback("sub")
def _sub_pb(g, s):
    return _unbroadcast(g, s["sa"]), -_unbroadcast(g, s["sb"])


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)
    return record("mul", (a, b), a.data * b.data, {"a": a.data, "b": b.data})


@register_pullback("mul")
def _mul_pb(g, s):
    a, b = s["a"], s["b"]
    return _unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("div", a, b)
    return record("div", (a, b), a.data / b.data, {"a": a.data, "b": b.data})


@register_pullback("div")
def _div_pb(g, s):
    a, b = s["a"], s["b"]
    return _unbroadcast(g / b, a.shape), _unbroadcast(-g * a / (b * b), b.shape)


def scale(a, c: float) -> Tensor:
    """Multiply by a constant Python scalar."""
    a = as_tensor(a)
    return record("scale", (a,), a.data * c, {"c": float(c)})


@register_pullback("scale")
def _scale_pb(g, s):
    return (g * s["c"],)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim not in (1, 2) or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    return record("matmul", (a, b), a.data @ b.data, {"a": a.data, "b": b.data})


@register_pullback("matmul")
def _matmul_pb(g, s):
    a, b = s["a"], s["b"]
    if b.ndim == 1:
        return np.outer(g, b), a.T @ g
    return g @ b.T, a.T @ g


# --- unary elementwise ------------------------------------------------------

def power(x, p: float) -> Tensor:
    """Elementwise ``x ** p`` for a constant exponent."""
    x = as_tensor(x)
    return record("pow", (x,), x.data ** p, {"x": x.data, "p": float(p)})


@register_pullback("pow")
def _pow_pb(g, s):
    x, p = s["x"], s["p"]
    return (g * p * x ** (p - 1.0),)


def sin(x) -> Tensor:
    x = as_tensor(x)
    return record("sin", (x,), np.sin(x.data), {"x": x.data})


@register_pullback("sin")
def _sin_pb(g, s):
    return (g * np.cos(s["x"]),)


def cos(x) -> Tensor:
    x = as_tensor(x)
    return record("cos", (x,), np.cos(x.data), {"x": x.data})


@register_pullback("cos")
def _cos_pb(g, s):
    return (-g * np.sin(s["x"]),)


def tanh(x) -> Tensor:
    x = as_tensor(x)
    y = np.tanh(x.data)
    return record("tanh", (x,), y, {"y": y})


@register_pullback("tanh")
def _tanh_pb(g, s):
    return (g * (1.0 - s["y"] ** 2),)


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    # split by sign so neither branch overflows
    d = x.data
    e = np.exp(-np.abs(d))
    y = np.where(d >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return record("sigmoid", (x,), y, {"y": y})


@register_pullback("sigmoid")
def _sigmoid_pb(g, s):
    y = s["y"]
    return (g * y * (1.0 - y),)


def relu(x) -> Tensor:
    x = as_tensor(x)
    return record("relu", (x,), np.maximum(x.data, 0.0), {"x": x.data})


@register_pullback("relu")
def _relu_pb(g, s):
    return (g * (s["x"] > 0),)


def abs(x) -> Tensor:
    x = as_tensor(x)
    return record("abs", (x,), np.abs(x.data), {"x": x.data})


@register_pullback("abs")
def _abs_pb(g, s):
    return (g * np.sign(s["x"]),)


# --- reductions and indexing ------------------------------------------------

def sum(x) -> Tensor:
    x = as_tensor(x)
    return record("sum", (x,), np.array(x.data.sum()), {"shape": x.shape})


@register_pullback("sum")
def _sum_pb(g, s):
    return (np.full(s["shape"], float(g)),)


def mean(x) -> Tensor:
    x = as_tensor(x)
    return record("mean", (x,), np.array(x.data.mean()), {"shape": x.shape})


@register_pullback("mean")
def _mean_pb(g, s):
    shape = s["shape"]
    n = int(np.prod(shape)) if shape else 1
    return (np.full(shape, float(g) / n),)


def gather(x, index) -> Tensor:
    """Select entries of the flattened ``x`` at integer positions ``index``."""
    x = as_tensor(x)
    idx = np.asarray(index, dtype=np.intp)
    if idx.size and (idx.min() < -x.size or idx.max() >= x.size):
        raise IndexError(f"gather: index out of range for tensor of size {x.size}")
    return record("gather", (x,), x.data.reshape(-1)[idx], {"idx": idx, "shape": x.shape})


@register_pullback("gather")
def _gather_pb(g, s):
    out = np.zeros(int(np.prod(s["shape"])) if s["shape"] else 1)
    np.add.at(out, s["idx"], g)
    return (out.reshape(s["shape"]),)


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    shape = tuple(int(n) for n in shape)
    try:
        y = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {x.shape} into {shape}") from None
    return record("reshape", (x,), y, {"shape": x.shape})


@register_pullback("reshape")
def _reshape_pb(g, s):
    return (g.reshape(s["shape"]),)


def total(tensors) -> Tensor:
    """Sum of several scalar tensors."""
    out = None
    for t in tensors:
        out = t if out is None else add(out, t)
    return out


__all__ = [
    "ShapeError", "add", "sub", "mul", "div", "scale", "matmul", "power",
    "sin", "cos", "tanh", "sigmoid", "relu", "abs", "sum", "mean", "gather",
    "reshape", "total",
]

