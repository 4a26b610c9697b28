"""Finite-difference checks for every registered pullback, plus end-to-end ones.

Each op check draws a random small instance, contracts the op's output with
a random constant tensor to get a scalar, and compares the tape gradient
against central differences.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import finite_difference_check, registered_ops
from .fem import solve_load_cases
from .generator import PARAM_NAMES, generate_raw, init_params, make_seed, project_mass
from .problems import make_problem, objective
from .sparse import SparsityPattern, TripletList, assemble_sparse, solve

H = 1e-6
# the full pipeline has ~1e6 amplification of solve roundoff, so a larger step
E2E_H = 1e-4
OP_TOL = 1e-6
E2E_TOL = 1e-4


@dataclass
class CheckResult:
    name: str
    instances: int
    max_error: float
    tol: float
    seconds: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.max_error) and self.max_error <= self.tol)


def _away_from_zero(rng, shape, margin=0.1):
    x = rng.uniform(margin, 1.5, size=shape)
    return x * rng.choice([-1.0, 1.0], size=shape)


def _shape(rng):
    return tuple(rng.integers(1, 5, size=rng.integers(1, 3)))


def _binary(op):
    def build(rng):
        a_shape = (3, 4)
        b_shape = [(3, 4), (1, 4), (4,), (3, 1)][rng.integers(4)]
        a = rng.normal(size=a_shape)
        b = rng.normal(size=b_shape)
        if op is ad.div:
            b = _away_from_zero(rng, b_shape, 0.5)
        c = rng.normal(size=a_shape)
        return (lambda x, y: ad.sum(ad.mul(op(x, y), c))), (a, b)
    return build


def _unary(op, sample=None):
    def build(rng):
        shape = _shape(rng)
        x = sample(rng, shape) if sample else rng.normal(size=shape)
        c = rng.normal(size=shape)
        return (lambda t: ad.sum(ad.mul(op(t), c))), (x,)
    return build


def _pow(rng):
    shape = _shape(rng)
    p = float(rng.choice([2.0, 3.0, 2.5, 0.5]))
    x = rng.uniform(0.3, 2.0, size=shape)
    c = rng.normal(size=shape)
    return (lambda t: ad.sum(ad.mul(ad.power(t, p), c))), (x,)


def _scale(rng):
    shape = _shape(rng)
    k = float(rng.normal())
    c = rng.normal(size=shape)
    return (lambda t: ad.sum(ad.mul(ad.scale(t, k), c))), (rng.normal(size=shape),)


def _matmul(rng):
    a, b = rng.normal(size=(3, 4)), rng.normal(size=(4, 2) if rng.random() < 0.7 else (4,))
    c = rng.normal(size=(3, 2) if b.ndim == 2 else (3,))
    return (lambda x, y: ad.sum(ad.mul(ad.matmul(x, y), c))), (a, b)


def _sum(rng):
    shape = _shape(rng)
    k = float(rng.normal())
    return (lambda t: ad.scale(ad.sum(t), k)), (rng.normal(size=shape),)


def _mean(rng):
    shape = _shape(rng)
    return (lambda t: ad.sin(ad.mean(t))), (rng.normal(size=shape),)


def _gather(rng):
    x = rng.normal(size=(3, 4))
    idx = rng.integers(0, 12, size=5)  # repeats allowed
    c = rng.normal(size=5)
    return (lambda t: ad.sum(ad.mul(ad.gather(t, idx), c))), (x,)


def _reshape(rng):
    x = rng.normal(size=(2, 6))
    c = rng.normal(size=(3, 4))
    return (lambda t: ad.sum(ad.mul(ad.reshape(t, (3, 4)), c))), (x,)


def _dense(rng):
    n_in, n_out = rng.integers(2, 6, size=2)
    args = (rng.normal(size=n_in), rng.normal(size=(n_out, n_in)), rng.normal(size=n_out))
    c = rng.normal(size=n_out)
    return (lambda x, w, b: ad.sum(ad.mul(ad.dense(x, w, b), c))), args


def _conv2d(rng):
    C, O, k = rng.integers(1, 3), rng.integers(1, 4), int(rng.choice([1, 2, 3]))
    pad = int(rng.integers(0, 2))
    H_, W_ = rng.integers(3, 6, size=2)
    args = (rng.normal(size=(C, H_, W_)), rng.normal(size=(O, C, k, k)), rng.normal(size=O))
    c = rng.normal(size=(O, H_ + 2 * pad - k + 1, W_ + 2 * pad - k + 1))
    return (lambda x, w, b: ad.sum(ad.mul(ad.conv2d(x, w, b, padding=pad), c))), args


def _conv_transpose2d(rng):
    C, O = rng.integers(1, 4, size=2)
    H_, W_ = rng.integers(1, 4, size=2)
    args = (rng.normal(size=(C, H_, W_)), rng.normal(size=(C, O, 4, 4)), rng.normal(size=O))
    c = rng.normal(size=(O, 2 * H_, 2 * W_))
    return (lambda x, w, b: ad.sum(ad.mul(ad.conv_transpose2d(x, w, b, 2, 1), c))), args


def _symmetric_triplets(rng, n):
    """Banded, diagonally dominant SPD matrix as triplets, with duplicates."""
    rows, cols, vals = [], [], []
    for i in range(n):
        for j in range(max(0, i - 2), i + 1):
            for _ in range(int(rng.integers(1, 3))):
                v = rng.uniform(3.0, 5.0) if i == j else rng.uniform(-0.5, 0.5)
                rows.append(i)
                cols.append(j)
                vals.append(v)
                if i != j:
                    rows.append(j)
                    cols.append(i)
                    vals.append(v)
    return np.array(rows), np.array(cols), np.array(vals)


def _sparse_assemble(rng):
    n = 6
    rows, cols, vals = _symmetric_triplets(rng, n)
    w = rng.normal(size=n)
    pat = SparsityPattern.from_triplets(rows, cols, n)
    wc = w[pat.column_of_slot()]

    def f(v):
        K = assemble_sparse(TripletList(rows, cols, v, n), pat)
        return ad.sum(ad.mul(K.values, wc))  # sum(K @ w)
    return f, (vals,)


def _sparse_solve(rng):
    n = 8
    rows, cols, vals = _symmetric_triplets(rng, n)
    F = rng.normal(size=n)
    c = rng.normal(size=n)
    free = None
    if rng.random() < 0.5:
        free = np.sort(rng.choice(n, size=6, replace=False))

    def f(v, load):
        K = assemble_sparse(TripletList(rows, cols, v, n))
        return ad.sum(ad.mul(solve(K, load, free), c))
    return f, (vals, F)


def _mass_projection(rng):
    shape = (int(rng.integers(2, 5)), int(rng.integers(2, 5)))
    raw = rng.uniform(-1, 1, size=shape)
    vf = float(rng.uniform(0.2, 0.6))
    beta = float(rng.uniform(1.0, 6.0))
    c = rng.normal(size=shape)
    return (lambda r: ad.sum(ad.mul(project_mass(r, vf, beta), c))), (raw,)


OP_CHECKS: dict[str, Callable] = {
    "add": _binary(ad.add),
    "sub": _binary(ad.sub),
    "mul": _binary(ad.mul),
    "div": _binary(ad.div),
    "scale": _scale,
    "matmul": _matmul,
    "pow": _pow,
    "sin": _unary(ad.sin),
    "cos": _unary(ad.cos),
    "tanh": _unary(ad.tanh),
    "sigmoid": _unary(ad.sigmoid, lambda r, s: 3.0 * r.normal(size=s)),
    "relu": _unary(ad.relu, _away_from_zero),
    "abs": _unary(ad.abs, _away_from_zero),
    "sum": _sum,
    "mean": _mean,
    "gather": _gather,
    "reshape": _reshape,
    "dense": _dense,
    "conv2d": _conv2d,
    "conv_transpose2d": _conv_transpose2d,
    "sparse_assemble": _sparse_assemble,
    "sparse_solve": _sparse_solve,
    "mass_projection": _mass_projection,
}


def check_op(op_id: str, instances: int = 20, seed: int = 0) -> CheckResult:
    build = OP_CHECKS[op_id]
    rng = np.random.default_rng([seed, sum(map(ord, op_id))])
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(instances):
        f, args = build(rng)
        worst = max(worst, finite_difference_check(f, tuple(args), H))
    return CheckResult(op_id, instances, worst, OP_TOL, time.perf_counter() - t0)


def check_end_to_end(problem_name: str, n_coords: int = 25, seed: int = 0,
                     target=None) -> CheckResult:
    """dL/dtheta on an 8x4 mesh against central differences on sampled weights."""
    pb = make_problem(problem_name, 8, 4, 0.3, 3.0, target=target)
    params = init_params(8, 4, seed)
    z = make_seed(params.seed_len, seed)
    theta0 = params.flat()
    rng = np.random.default_rng(seed + 17)
    coords = rng.choice(theta0.size, size=min(n_coords, theta0.size), replace=False)

    def f(theta):
        # slice the flat vector back into layers so one leaf carries every weight
        layers, i = {}, 0
        for k in PARAM_NAMES:
            a = params.arrays[k]
            layers[k] = ad.reshape(ad.gather(theta, np.arange(i, i + a.size)), a.shape)
            i += a.size
        x = project_mass(generate_raw(layers, z, params), pb.volfrac)
        return objective(solve_load_cases(pb, x), pb)

    t0 = time.perf_counter()
    err = finite_difference_check(f, theta0, E2E_H, coords=[coords])
    label = f"end_to_end[{problem_name}{'' if target is None else ':target'}]"
    return CheckResult(label, len(coords), err, E2E_TOL, time.perf_counter() - t0)


def run_suite(scale: int = 1, seed: int = 0, ops=None, end_to_end: bool = True) -> list[CheckResult]:
    """All op checks (20 * scale instances each) and the end-to-end checks."""
    names = registered_ops() if ops is None else list(ops)
    results = []
    for name in names:
        if name not in OP_CHECKS:
            results.append(CheckResult(name, 0, float("inf"), OP_TOL, 0.0))
            continue
        results.append(check_op(name, 20 * scale, seed))
    if end_to_end:
        results.append(check_end_to_end("mbb", 25 * scale, seed))
        results.append(check_end_to_end("inverter", 25 * scale, seed))
    return results


def format_report(results: list[CheckResult]) -> str:
    lines = [f"{'check':<28}{'n':>5}{'max rel err':>14}{'tol':>9}  status"]
    for r in results:
        lines.append(f"{r.name:<28}{r.instances:>5}{r.max_error:>14.3e}{r.tol:>9.0e}  "
                     f"{'ok' if r.passed else 'FAIL'}")
    return "\n".join(lines)
