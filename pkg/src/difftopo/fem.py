"""Plane-stress bilinear-quad finite elements on a structured grid.

Nodes are numbered column by column from the top-left corner, so node
``(ix, iy)`` has id ``(ny + 1) * ix + iy`` with ``iy = 0`` on the top edge.
Each node carries an x dof ``2 * id`` and a y dof ``2 * id + 1``; positive y
displacement points up.  Element ``(iy, ix)`` is element ``iy * nx + ix``,
which matches ``x.ravel()`` for a density array of shape ``(ny, nx)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, as_tensor
from .sparse import SparseMatrix, SparsityPattern, TripletList, assemble_sparse, solve


@dataclass(frozen=True)
class Material:
    E0: float = 1.0
    Emin: float = 1e-9
    nu: float = 0.3
    p: float = 3.0

    def __post_init__(self):
        if not 0 < self.Emin < self.E0:
            raise ValueError("need 0 < Emin < E0")
        if not 0 <= self.nu < 0.5:
            raise ValueError("Poisson ratio must lie in [0, 0.5)")
        if self.p < 1:
            raise ValueError("penalty exponent must be >= 1")


def element_stiffness(nu: float = 0.3) -> np.ndarray:
    """Unit-modulus 8x8 stiffness of a unit square, 2x2 Gauss quadrature.

    Corner order is counter-clockwise from the bottom-left corner, with
    (ux, uy) per corner.
    """
    if not 0 <= nu < 0.5:
        raise ValueError("Poisson ratio must lie in [0, 0.5)")
    D = np.array([[1.0, nu, 0.0], [nu, 1.0, 0.0], [0.0, 0.0, (1.0 - nu) / 2.0]]) / (1.0 - nu ** 2)
    g = 0.5 / np.sqrt(3.0)
    K = np.zeros((8, 8))
    for xi in (0.5 - g, 0.5 + g):
        for eta in (0.5 - g, 0.5 + g):
            # bilinear shape function gradients on [0,1]^2 (unit Jacobian)
            dN = np.array([
                [-(1 - eta), -(1 - xi)],
                [(1 - eta), -xi],
                [eta, xi],
                [-eta, (1 - xi)],
            ])
            B = np.zeros((3, 8))
            B[0, 0::2] = dN[:, 0]
            B[1, 1::2] = dN[:, 1]
            B[2, 0::2] = dN[:, 1]
            B[2, 1::2] = dN[:, 0]
            K += 0.25 * B.T @ D @ B
    return 0.5 * (K + K.T)


class Mesh:
    def __init__(self, nx: int, ny: int):
        if nx < 1 or ny < 1:
            raise ValueError(f"mesh needs at least one element per axis, got {nx}x{ny}")
        self.nx = int(nx)
        self.ny = int(ny)

    @property
    def nel(self) -> int:
        return self.nx * self.ny

    @property
    def nnodes(self) -> int:
        return (self.nx + 1) * (self.ny + 1)

    @property
    def ndof(self) -> int:
        return 2 * self.nnodes

    def node(self, ix: int, iy: int) -> int:
        if not (0 <= ix <= self.nx and 0 <= iy <= self.ny):
            raise IndexError(f"node ({ix}, {iy}) outside the {self.nx}x{self.ny} grid")
        return (self.ny + 1) * ix + iy

    def xdof(self, ix: int, iy: int) -> int:
        return 2 * self.node(ix, iy)

    def ydof(self, ix: int, iy: int) -> int:
        return 2 * self.node(ix, iy) + 1

    @cached_property
    def edofs(self) -> np.ndarray:
        """(nel, 8) dof indices, rows ordered like ``x.ravel()``."""
        iy, ix = np.meshgrid(np.arange(self.ny), np.arange(self.nx), indexing="ij")
        tl = (self.ny + 1) * ix + iy
        tr = (self.ny + 1) * (ix + 1) + iy
        bl, br = tl + 1, tr + 1
        e = np.stack([2 * bl, 2 * bl + 1, 2 * br, 2 * br + 1,
                      2 * tr, 2 * tr + 1, 2 * tl, 2 * tl + 1], axis=-1)
        return e.reshape(-1, 8).astype(np.int64)

    @cached_property
    def triplet_index(self) -> tuple[np.ndarray, np.ndarray]:
        e = self.edofs
        rows = np.repeat(e, 8, axis=1).reshape(-1)
        cols = np.tile(e, (1, 8)).reshape(-1)
        return rows, cols

    @cached_property
    def pattern(self) -> SparsityPattern:
        rows, cols = self.triplet_index
        return SparsityPattern.from_triplets(rows, cols, self.ndof)


def stiffness_scale(x, mat: Material) -> Tensor:
    """Emin + x^p (E0 - Emin), elementwise."""
    return ad.add(ad.scale(ad.power(x, mat.p), mat.E0 - mat.Emin), mat.Emin)


def assemble_K(mesh: Mesh, x, mat: Material, K0: np.ndarray | None = None) -> TripletList:
    x = as_tensor(x)
    if x.shape != (mesh.ny, mesh.nx):
        raise ValueError(f"density shape {x.shape} does not match mesh ({mesh.ny}, {mesh.nx})")
    if K0 is None:
        K0 = element_stiffness(mat.nu)
    E = ad.reshape(stiffness_scale(x, mat), (mesh.nel, 1))
    vals = ad.reshape(ad.mul(E, K0.reshape(1, 64)), (mesh.nel * 64,))
    rows, cols = mesh.triplet_index
    return TripletList(rows, cols, vals, mesh.ndof)


def stiffness_matrix(mesh: Mesh, x, mat: Material, K0: np.ndarray | None = None) -> SparseMatrix:
    return assemble_sparse(assemble_K(mesh, x, mat, K0), mesh.pattern)


def displacements(problem, x, load_case: int = 0, K: SparseMatrix | None = None) -> Tensor:
    """Solve one load case of ``problem`` at densities ``x``.

    Pass an already assembled ``K`` to share its factorization between load
    cases.
    """
    if not 0 <= load_case < len(problem.loads):
        raise IndexError(f"load case {load_case} not defined (have {len(problem.loads)})")
    if K is None:
        K = stiffness_matrix(problem.mesh, x, problem.material, problem.K0)
    return solve(K, problem.load_vector(load_case), problem.free_dofs)


def solve_load_cases(problem, x) -> list[Tensor]:
    K = stiffness_matrix(problem.mesh, x, problem.material, problem.K0)
    return [displacements(problem, x, i, K) for i in range(len(problem.loads))]


def compliance(U, F) -> Tensor:
    U, F = as_tensor(U), as_tensor(F)
    if U.shape != F.shape:
        raise ValueError(f"compliance: U {U.shape} and F {F.shape} differ in length")
    return ad.sum(ad.mul(F, U))


def element_energies(mesh: Mesh, U: np.ndarray, K0: np.ndarray) -> np.ndarray:
    """u_e^T K0 u_e per element, shaped (ny, nx)."""
    ue = np.asarray(U)[mesh.edofs]
    return np.einsum("ei,ij,ej->e", ue, K0, ue).reshape(mesh.ny, mesh.nx)
