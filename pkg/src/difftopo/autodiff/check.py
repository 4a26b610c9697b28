"""Central finite-difference oracle for tape gradients."""
from __future__ import annotations

from typing import Callable, Sequence, Union

import numpy as np

from .tape import Tape, Tensor, backward

ArrayLike = Union[np.ndarray, Sequence[float], float]


class NonFiniteError(FloatingPointError):
    pass


def finite_difference_check(f: Callable[..., Tensor], x: Union[ArrayLike, Sequence[np.ndarray]],
                            h: float = 1e-6, coords=None) -> float:
    """Max relative error between the tape gradient of ``f`` and central differences.

    ``x`` is one array, or a tuple of arrays when ``f`` takes several tensor
    arguments.  The error per coordinate is ``|ad - fd| / max(1, |fd|)``.
    ``coords`` optionally restricts the probe to a subset: a list (one entry
    per argument) of flat index arrays.
    """
    if h <= 0:
        raise ValueError("step h must be positive")
    multi = isinstance(x, tuple)
    args = [np.array(a, dtype=np.float64) for a in (x if multi else (x,))]

    tape = Tape()
    leaves = [tape.variable(a) for a in args]
    out = f(*leaves)
    if not np.all(np.isfinite(out.data)):
        raise NonFiniteError("f is not finite at the base point")
    if out.tracked:
        grads = backward(out)
        ad = [grads.wrt(t).reshape(-1) for t in leaves]
    else:
        ad = [np.zeros(a.size) for a in args]

    def probe(k: int, i: int, delta: float) -> float:
        pert = [a.copy() for a in args]
        pert[k].reshape(-1)[i] += delta
        val = f(*(Tensor(a) for a in pert)).data
        if not np.all(np.isfinite(val)):
            raise NonFiniteError(f"f is not finite at probe (arg {k}, coord {i})")
        return float(val.reshape(-1)[0])

    worst = 0.0
    for k, a in enumerate(args):
        idx = range(a.size) if coords is None else coords[k]
        for i in idx:
            fd = (probe(k, i, h) - probe(k, i, -h)) / (2.0 * h)
            err = abs(ad[k][i] - fd) / max(1.0, abs(fd))
            worst = max(worst, err)
    return worst
