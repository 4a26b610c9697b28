"""Reverse-mode automatic differentiation on a per-evaluation tape."""
from . import nn, ops
from .check import NonFiniteError, finite_difference_check
from .nn import conv2d, conv_transpose2d, dense
from .ops import (ShapeError, abs, add, cos, div, gather, matmul, mean, mul,
                  power, relu, reshape, scale, sigmoid, sin, sub, sum, tanh,
                  total)
from .tape import (AutodiffError, GradientMap, Tape, TapeNode, Tensor,
                   as_tensor, backward, record, register_pullback,
                   registered_ops)

__all__ = [
    "AutodiffError", "GradientMap", "NonFiniteError", "ShapeError", "Tape",
    "TapeNode", "Tensor", "abs", "add", "as_tensor", "backward", "conv2d",
    "conv_transpose2d", "cos", "dense", "div", "finite_difference_check",
    "gather", "matmul", "mean", "mul", "nn", "ops", "power", "record",
    "register_pullback", "registered_ops", "relu", "reshape", "scale",
    "sigmoid", "sin", "sub", "sum", "tanh", "total",
]
