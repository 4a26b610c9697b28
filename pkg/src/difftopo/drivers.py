"""Optimization loops: generator + Adam, and the SIMP/OC baseline."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .autodiff import Tape, Tensor, backward
from .fem import solve_load_cases
from .generator import GeneratorParams, generate_raw, init_params, make_seed, project_mass
from .optim import AdamState, OCParams, adam_step, filter_sensitivity, oc_update, sensitivity
from .problems import ProblemSpec, objective

log = logging.getLogger(__name__)


class OptimizationError(FloatingPointError):
    pass


@dataclass
class IterationRecord:
    iter: int
    objective: float
    volfrac: float
    seconds: float


@dataclass
class RunHistory:
    records: list = field(default_factory=list)
    density: Optional[np.ndarray] = None
    final: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def objectives(self) -> np.ndarray:
        return np.array([r.objective for r in self.records])

    @property
    def volfracs(self) -> np.ndarray:
        return np.array([r.volfrac for r in self.records])

    @property
    def seconds(self) -> np.ndarray:
        return np.array([r.seconds for r in self.records])

    def best_so_far(self) -> np.ndarray:
        return np.minimum.accumulate(self.objectives)


@dataclass(frozen=True)
class NeuralHyper:
    lr: float = 0.01
    beta: float = 5.0
    detach_offset: bool = False
    c0: int = 32
    c1: int = 16
    seed_len: int = 128
    init_gain: float = 0.5


def evaluate(problem: ProblemSpec, x: np.ndarray) -> dict:
    """Objective and port displacements of a fixed design (no gradients)."""
    Us = [U.data for U in solve_load_cases(problem, Tensor(x))]
    out = {"objective": float(objective([Tensor(U) for U in Us], problem).data)}
    if problem.input_dof is not None:
        out["u_in"] = float(Us[0][problem.input_dof])
        out["displacement"] = abs(out["u_in"])
    if problem.output_dof is not None:
        out["u_out"] = float(Us[0][problem.output_dof])
        out["geometry_advantage"] = out["u_out"] / out["u_in"]
        if len(Us) > 1:
            out["u_out_II"] = float(Us[1][problem.output_dof])
    return out


def neural_design(params: GeneratorParams, seed: np.ndarray, volfrac: float,
                  beta: float = 5.0) -> np.ndarray:
    return project_mass(generate_raw(params, seed), volfrac, beta).data


def neural_loss(problem: ProblemSpec, params: GeneratorParams, seed: np.ndarray,
                beta: float = 5.0, detach_offset: bool = False) -> tuple[Tensor, Tensor, dict]:
    """Record generator -> projection -> FEM -> objective on a fresh tape."""
    tape = Tape()
    theta = params.leaves(tape)
    raw = generate_raw(theta, seed, params)
    x = project_mass(raw, problem.volfrac, beta, detach_offset)
    Us = solve_load_cases(problem, x)
    return objective(Us, problem), x, theta


def run_neural(problem: ProblemSpec, iters: int = 100, seed: int = 0,
               hyper: NeuralHyper = NeuralHyper(), callback=None) -> RunHistory:
    """Optimize generator weights with Adam through the differentiable solver."""
    if iters < 1:
        raise ValueError("need at least one iteration")
    params = init_params(problem.nx, problem.ny, seed, c0=hyper.c0, c1=hyper.c1,
                         seed_len=hyper.seed_len, gain=hyper.init_gain)
    z = make_seed(hyper.seed_len, seed)
    theta = params.flat()
    state = AdamState.zeros_like(theta, lr=hyper.lr)
    hist = RunHistory()
    for it in range(iters):
        t0 = time.perf_counter()
        params = params.with_flat(theta)
        L, x, leaves = neural_loss(problem, params, z, hyper.beta, hyper.detach_offset)
        val = float(L.data)
        if not np.isfinite(val):
            raise OptimizationError(f"non-finite objective at iteration {it}")
        grads = backward(L)
        g = np.concatenate([grads.wrt(leaves[k]).reshape(-1) for k in leaves])
        theta, state = adam_step(theta, g, state)
        rec = IterationRecord(it, val, float(x.data.mean()), time.perf_counter() - t0)
        hist.records.append(rec)
        log.debug("iter %d  objective %.6g  volfrac %.4f", it, val, rec.volfrac)
        if callback is not None:
            callback(rec, x.data)
    hist.density = neural_design(params.with_flat(theta), z, problem.volfrac, hyper.beta)
    hist.final = evaluate(problem, hist.density)
    return hist


def run_simp(problem: ProblemSpec, iters: int = 100, oc: OCParams = OCParams(),
             rmin: float = 1.5, callback=None) -> RunHistory:
    """Classic SIMP loop: solve, sensitivity, filter, OC update."""
    if problem.objective != "displacement":
        raise ValueError("the SIMP baseline only handles single-load displacement problems")
    if iters < 1:
        raise ValueError("need at least one iteration")
    x = np.full((problem.ny, problem.nx), problem.volfrac)
    hist = RunHistory()
    for it in range(iters):
        t0 = time.perf_counter()
        (U,) = solve_load_cases(problem, Tensor(x))
        val = float(objective([U], problem).data)
        if not np.isfinite(val):
            raise OptimizationError(f"non-finite objective at iteration {it}")
        dc = sensitivity(x, U.data, problem.mesh, problem.material, problem.K0)
        dc = filter_sensitivity(x, dc, rmin)
        x = oc_update(x, dc, problem.volfrac, oc)
        rec = IterationRecord(it, val, float(x.mean()), time.perf_counter() - t0)
        hist.records.append(rec)
        log.debug("iter %d  objective %.6g  volfrac %.4f", it, val, rec.volfrac)
        if callback is not None:
            callback(rec, x)
    hist.density = x
    hist.final = evaluate(problem, x)
    return hist
