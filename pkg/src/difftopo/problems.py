"""Benchmark design domains and their objective functions."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, as_tensor
from .fem import Material, Mesh, element_stiffness

PROBLEMS = ("mbb", "cantilever", "bridge", "inverter")
OBJECTIVES = ("displacement", "inverter", "target")


class ProblemError(ValueError):
    pass


@dataclass
class ProblemSpec:
    """A meshed design domain with supports, load cases and an objective.

    ``loads`` holds one ``{dof: force}`` dict per load case.  For the force
    inverter, ``input_dof`` is loaded in case 0 and ``output_dof`` in case 1.
    """

    name: str
    mesh: Mesh
    material: Material
    fixed_dofs: np.ndarray
    loads: list
    volfrac: float
    objective: str = "displacement"
    input_dof: Optional[int] = None
    output_dof: Optional[int] = None
    w: float = 0.01
    target: Optional[float] = None
    K0: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.fixed_dofs = np.unique(np.asarray(self.fixed_dofs, dtype=np.int64))
        n = self.mesh.ndof
        if self.fixed_dofs.size and (self.fixed_dofs.min() < 0 or self.fixed_dofs.max() >= n):
            raise ProblemError("fixed dof out of range")
        if not self.loads:
            raise ProblemError("need at least one load case")
        for case in self.loads:
            for dof in case:
                if not 0 <= dof < n:
                    raise ProblemError(f"load dof {dof} out of range")
        if not 0 < self.volfrac < 1:
            raise ProblemError(f"volume fraction must lie in (0, 1), got {self.volfrac}")
        if self.objective not in OBJECTIVES:
            raise ProblemError(f"unknown objective {self.objective!r}")
        if self.objective == "target" and self.target is None:
            raise ProblemError("target objective needs a target displacement")
        if self.K0 is None:
            self.K0 = element_stiffness(self.material.nu)

    @property
    def nx(self) -> int:
        return self.mesh.nx

    @property
    def ny(self) -> int:
        return self.mesh.ny

    @property
    def penalty(self) -> float:
        return self.material.p

    @cached_property
    def free_dofs(self) -> np.ndarray:
        return np.setdiff1d(np.arange(self.mesh.ndof), self.fixed_dofs)

    def load_vector(self, case: int = 0) -> np.ndarray:
        F = np.zeros(self.mesh.ndof)
        for dof, val in self.loads[case].items():
            F[dof] += val
        return F


def make_problem(name: str, nx: int = 48, ny: int = 24, volfrac: float = 0.3,
                 p: float = 3.0, *, w: float = 0.01, target: Optional[float] = None,
                 material: Optional[Material] = None) -> ProblemSpec:
    """Build one of the benchmark problems.

    mbb         half MBB beam: symmetry on the left edge, roller at the
                bottom-right corner, unit downward load at the top-left corner
    cantilever  left edge clamped, unit downward load at mid right edge
    bridge      bottom-left pinned, bottom-right on a roller, unit downward
                load at mid bottom edge
    inverter    input pushed in +x at mid left edge, output monitored at mid
                right edge, left corners pinned; case II loads the output
    """
    if name not in PROBLEMS:
        raise ProblemError(f"unknown problem {name!r}; choose from {', '.join(PROBLEMS)}")
    if nx < 2 or ny < 2:
        raise ProblemError(f"mesh too small: {nx}x{ny}")
    mesh = Mesh(nx, ny)
    mat = material if material is not None else Material(p=p)
    if material is not None and material.p != p:
        mat = Material(mat.E0, mat.Emin, mat.nu, p)
    kw = dict(mesh=mesh, material=mat, volfrac=volfrac, w=w)

    if name == "mbb":
        fixed = [mesh.xdof(0, iy) for iy in range(ny + 1)] + [mesh.ydof(nx, ny)]
        load = mesh.ydof(0, 0)
        return ProblemSpec("mbb", fixed_dofs=fixed, loads=[{load: -1.0}], input_dof=load, **kw)
    if name == "cantilever":
        fixed = [d for iy in range(ny + 1) for d in (mesh.xdof(0, iy), mesh.ydof(0, iy))]
        load = mesh.ydof(nx, ny // 2)
        return ProblemSpec("cantilever", fixed_dofs=fixed, loads=[{load: -1.0}],
                           input_dof=load, **kw)
    if name == "bridge":
        fixed = [mesh.xdof(0, ny), mesh.ydof(0, ny), mesh.ydof(nx, ny)]
        load = mesh.ydof(nx // 2, ny)
        return ProblemSpec("bridge", fixed_dofs=fixed, loads=[{load: -1.0}], input_dof=load, **kw)

    fixed = [mesh.xdof(0, 0), mesh.ydof(0, 0), mesh.xdof(0, ny), mesh.ydof(0, ny)]
    din = mesh.xdof(0, ny // 2)
    dout = mesh.xdof(nx, ny // 2)
    objective = "inverter" if target is None else "target"
    # case II pushes the output port along the direction it should travel
    return ProblemSpec("inverter", fixed_dofs=fixed, loads=[{din: 1.0}, {dout: -1.0}],
                       input_dof=din, output_dof=dout, objective=objective,
                       target=target, **kw)


def _loaded(U, problem: ProblemSpec, case: int, dof: int) -> Tensor:
    """F * u at one loaded dof (work-conjugate displacement)."""
    force = problem.loads[case].get(dof)
    if force is None:
        raise ProblemError(f"dof {dof} is not loaded in case {case}")
    return ad.scale(ad.gather(U, [dof]), force)


def objective_displacement(U, problem: ProblemSpec) -> Tensor:
    if problem.input_dof is None:
        raise ProblemError("problem has no monitored load dof")
    return ad.reshape(_loaded(as_tensor(U), problem, 0, problem.input_dof), ())


def _inverter_terms(U_I, U_II, problem: ProblemSpec):
    if problem.input_dof is None or problem.output_dof is None:
        raise ProblemError("inverter objective needs input and output dofs")
    U_I, U_II = as_tensor(U_I), as_tensor(U_II)
    u_in = ad.gather(U_I, [problem.input_dof])
    u_out = ad.gather(U_I, [problem.output_dof])
    if float(u_in.data[0]) == 0.0:
        raise ProblemError("input displacement is zero; geometry advantage undefined")
    stiff = ad.add(_loaded(U_II, problem, 1, problem.output_dof),
                   _loaded(U_I, problem, 0, problem.input_dof))
    return u_in, u_out, stiff


def objective_inverter(U_I, U_II, problem: ProblemSpec, w: Optional[float] = None) -> Tensor:
    """Geometry advantage plus ``w`` times the two port compliances."""
    w = problem.w if w is None else w
    u_in, u_out, stiff = _inverter_terms(U_I, U_II, problem)
    return ad.reshape(ad.add(ad.div(u_out, u_in), ad.scale(stiff, w)), ())


def objective_target(U_I, U_II, problem: ProblemSpec, w: Optional[float] = None,
                     target: Optional[float] = None) -> Tensor:
    """``|u_out - target|`` plus ``w`` times the two port compliances."""
    w = problem.w if w is None else w
    target = problem.target if target is None else target
    if target is None:
        raise ProblemError("no target displacement given")
    u_in, u_out, stiff = _inverter_terms(U_I, U_II, problem)
    return ad.reshape(ad.add(ad.abs(ad.sub(u_out, target)), ad.scale(stiff, w)), ())


def objective(Us, problem: ProblemSpec) -> Tensor:
    """Dispatch on ``problem.objective`` given the solved load cases."""
    if problem.objective == "displacement":
        return objective_displacement(Us[0], problem)
    if problem.objective == "inverter":
        return objective_inverter(Us[0], Us[1], problem)
    return objective_target(Us[0], Us[1], problem)
