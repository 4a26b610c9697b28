"""Tape-based reverse-mode automatic differentiation.

Every forward operation on a tracked :class:`Tensor` appends a
:class:`TapeNode` to the tape of its inputs.  :func:`backward` then walks the
tape from the last node to the first, feeding each node's accumulated adjoint
through the pullback registered for its ``op_id``.

A tape is meant to be short lived: build one per objective evaluation, call
:func:`backward`, and drop it.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Sequence

import numpy as np

__all__ = [
    "AutodiffError",
    "GradientMap",
    "Tape",
    "TapeNode",
    "Tensor",
    "as_tensor",
    "backward",
    "record",
    "register_pullback",
    "registered_ops",
]

# op_id -> rule(g, saved) returning one adjoint (or None) per input
Pullback = Callable[[np.ndarray, dict], Sequence[Optional[np.ndarray]]]

_PULLBACKS: dict[str, Pullback] = {}


class AutodiffError(RuntimeError):
    """Raised for misuse of the tape or a malformed pullback."""


def register_pullback(op_id: str, rule: Optional[Pullback] = None):
    """Register the pullback rule for ``op_id``.

    Can be called directly or used as a decorator::

        @register_pullback("cube")
        def _cube(g, saved):
            return (3.0 * saved["x"] ** 2 * g,)
    """
    if rule is None:
        def deco(fn: Pullback) -> Pullback:
            register_pullback(op_id, fn)
            return fn
        return deco
    if op_id in _PULLBACKS:
        raise AutodiffError(f"pullback for op {op_id!r} is already registered")
    _PULLBACKS[op_id] = rule
    return rule


def registered_ops() -> list[str]:
    return sorted(_PULLBACKS)


@dataclass
class TapeNode:
    op_id: str
    input_ids: tuple[Optional[int], ...]
    input_shapes: tuple[tuple[int, ...], ...]
    shape: tuple[int, ...]
    saved: dict = field(default_factory=dict)


class Tape:
    """An append-only record of operations.  Node ids are list positions."""

    def __init__(self) -> None:
        self.nodes: list[TapeNode] = []

    def __len__(self) -> int:
        return len(self.nodes)

    def _append(self, node: TapeNode) -> int:
        for i in node.input_ids:
            if i is not None and i >= len(self.nodes):
                raise AutodiffError("tape inputs must reference earlier nodes")
        self.nodes.append(node)
        return len(self.nodes) - 1

    def variable(self, data: Any) -> "Tensor":
        """Create a leaf tensor whose adjoint will be collected."""
        arr = np.array(data, dtype=np.float64)
        nid = self._append(TapeNode("leaf", (), (), arr.shape))
        return Tensor(arr, nid, self)


class Tensor:
    """Dense float64 array, optionally tracked on a tape.

    A tensor without ``node_id`` is a constant: operations on constants are
    evaluated but not recorded, and constants never receive adjoints.
    """

    __array_priority__ = 100

    def __init__(self, data: Any, node_id: Optional[int] = None,
                 tape: Optional[Tape] = None):
        self.data = np.asarray(data, dtype=np.float64, order="C")
        self.node_id = node_id
        self.tape = tape

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def tracked(self) -> bool:
        return self.node_id is not None

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        tag = f"node={self.node_id}" if self.tracked else "const"
        return f"Tensor(shape={self.shape}, {tag})"

    def __len__(self) -> int:
        return len(self.data)

    # arithmetic sugar; definitions live in ops.py
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from . import ops
        return ops.add(other, self)

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        if np.isscalar(other):
            return ops.scale(self, float(other))
        return ops.mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __truediv__(self, other):
        from . import ops
        if np.isscalar(other):
            return ops.scale(self, 1.0 / float(other))
        return ops.div(self, other)

    def __rtruediv__(self, other):
        from . import ops
        return ops.div(other, self)

    def __neg__(self):
        from . import ops
        return ops.scale(self, -1.0)

    def __pow__(self, p):
        from . import ops
        return ops.power(self, p)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def reshape(self, *shape):
        from . import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def sum(self):
        from . import ops
        return ops.sum(self)


def as_tensor(x: Any) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def record(op_id: str, inputs: Sequence[Tensor], out: np.ndarray,
           saved: Optional[dict] = None) -> Tensor:
    """Wrap ``out`` as the result of ``op_id`` applied to ``inputs``.

    The node is recorded only if some input is tracked.  ``saved`` holds the
    forward values the pullback needs; they are kept by value on the node.
    """
    tape = None
    for t in inputs:
        if t.tracked:
            if tape is None:
                tape = t.tape
            elif t.tape is not tape:
                raise AutodiffError(f"{op_id}: inputs belong to different tapes")
    if tape is None:
        return Tensor(out)
    node = TapeNode(
        op_id,
        tuple(t.node_id for t in inputs),
        tuple(t.shape for t in inputs),
        np.shape(out),
        saved if saved is not None else {},
    )
    return Tensor(out, tape._append(node), tape)


class GradientMap(dict):
    """node_id -> adjoint array.  Also indexable by the tensor itself."""

    def __getitem__(self, key):
        if isinstance(key, Tensor):
            key = key.node_id
        return super().__getitem__(key)

    def __contains__(self, key):
        if isinstance(key, Tensor):
            key = key.node_id
        return super().__contains__(key)

    def wrt(self, t: Tensor) -> np.ndarray:
        """Adjoint of ``t``; zeros if ``t`` does not influence the output."""
        if t.node_id is not None and t.node_id in self:
            return super().__getitem__(t.node_id)
        return np.zeros(t.shape)


def backward(output: Tensor, hook: Optional[Callable[[int, TapeNode], None]] = None
             ) -> GradientMap:
    """Propagate the unit seed from scalar ``output`` back through its tape.

    ``hook(node_id, node)`` is invoked just before each pullback runs, which
    is handy for instrumenting the visiting order.
    """
    if output.size != 1:
        raise AutodiffError(f"backward needs a scalar output, got shape {output.shape}")
    if not output.tracked:
        raise AutodiffError("output is a constant; nothing was recorded")
    tape = output.tape
    grads = GradientMap()
    grads[output.node_id] = np.ones(output.shape)
    for nid in range(output.node_id, -1, -1):
        if nid not in grads:
            continue
        node = tape.nodes[nid]
        if node.op_id == "leaf":
            continue
        rule = _PULLBACKS.get(node.op_id)
        if rule is None:
            raise AutodiffError(f"no pullback registered for op {node.op_id!r}")
        if hook is not None:
            hook(nid, node)
        adjoints = rule(grads[nid], node.saved)
        if len(adjoints) != len(node.input_ids):
            raise AutodiffError(
                f"pullback of {node.op_id!r} returned {len(adjoints)} adjoints "
                f"for {len(node.input_ids)} inputs")
        for src, shape, adj in zip(node.input_ids, node.input_shapes, adjoints):
            if src is None or adj is None:
                continue
            adj = np.asarray(adj, dtype=np.float64)
            if adj.shape != shape:
                raise AutodiffError(
                    f"pullback of {node.op_id!r} produced adjoint of shape "
                    f"{adj.shape} for an input of shape {shape}")
            if src in grads:
                grads[src] = grads[src] + adj
            else:
                grads[src] = adj
    return grads
