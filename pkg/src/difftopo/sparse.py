"""Differentiable sparse assembly and SPD solve.

``assemble_sparse`` maps triplet values onto compressed-column storage; its
pullback reads the adjoint at each triplet's own position.  ``solve`` factors
the reduced (free-dof) matrix once, caches the factor on the matrix, and the
pullback reuses that factor for the adjoint solve.  The matrix adjoint is
only formed on the stored nonzero pattern.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .autodiff import Tensor, as_tensor, record, register_pullback


class FactorizationError(np.linalg.LinAlgError):
    """Reduced matrix is not positive definite."""

    def __init__(self, msg: str, index: Optional[int] = None):
        super().__init__(msg)
        self.index = index


class SolveError(np.linalg.LinAlgError):
    pass


class _Counters:
    """Process-wide tallies, used to check factorization reuse."""

    def __init__(self) -> None:
        self.factorizations = 0
        self.solves = 0

    def reset(self) -> None:
        self.factorizations = 0
        self.solves = 0


counters = _Counters()


@dataclass
class TripletList:
    rows: np.ndarray
    cols: np.ndarray
    vals: Tensor
    n: int

    def __post_init__(self) -> None:
        self.rows = np.asarray(self.rows, dtype=np.int64)
        self.cols = np.asarray(self.cols, dtype=np.int64)
        self.vals = as_tensor(self.vals)
        if not (self.rows.shape == self.cols.shape == (self.vals.size,)):
            raise ValueError(
                f"triplet lengths differ: I {self.rows.shape}, J {self.cols.shape}, "
                f"V {self.vals.shape}")
        for name, a in (("row", self.rows), ("column", self.cols)):
            if a.size and (a.min() < 0 or a.max() >= self.n):
                raise IndexError(f"{name} index out of range [0, {self.n})")


@dataclass(frozen=True)
class SparsityPattern:
    """CSC structure plus the triplet -> storage-slot map."""

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    slot: np.ndarray  # slot[k] = position of triplet k in the data array

    @property
    def nnz(self) -> int:
        return self.indices.size

    @classmethod
    def from_triplets(cls, rows, cols, n: int) -> "SparsityPattern":
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        key = cols * n + rows  # column-major, then row
        uniq, slot = np.unique(key, return_inverse=True)
        ucols, urows = np.divmod(uniq, n)
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(indptr, ucols + 1, 1)
        indptr = np.cumsum(indptr)
        return cls(n, indptr, urows, slot.reshape(-1))

    def column_of_slot(self) -> np.ndarray:
        return np.repeat(np.arange(self.n), np.diff(self.indptr))


@dataclass
class Factorization:
    """LDL^T-form factor of the reduced matrix, from a symmetric-mode LU.

    SuperLU runs with a symmetric fill-reducing ordering and no pivoting, so
    ``U = D L^T`` and the factor is a sparse LDL^T of ``P A P^T``.
    """

    free: np.ndarray
    matrix: sp.csc_matrix = field(repr=False)
    lu: object = field(repr=False)

    @property
    def perm(self) -> np.ndarray:
        return self.lu.perm_c

    @property
    def L(self) -> sp.csc_matrix:
        return self.lu.L

    @property
    def D(self) -> np.ndarray:
        return self.lu.U.diagonal()

    def solve(self, b: np.ndarray) -> np.ndarray:
        counters.solves += 1
        return self.lu.solve(b)


class SparseMatrix:
    """Square sparse matrix whose stored values live on the tape."""

    def __init__(self, pattern: SparsityPattern, values: Tensor, symmetric: bool = True):
        if values.shape != (pattern.nnz,):
            raise ValueError(f"expected {pattern.nnz} values, got {values.shape}")
        self.pattern = pattern
        self.values = values
        self.symmetric = symmetric
        self._factors: dict[bytes, Factorization] = {}

    @property
    def n(self) -> int:
        return self.pattern.n

    def to_scipy(self) -> sp.csc_matrix:
        p = self.pattern
        return sp.csc_matrix((self.values.data, p.indices, p.indptr), shape=(p.n, p.n))

    def toarray(self) -> np.ndarray:
        return self.to_scipy().toarray()


def assemble_sparse(t: TripletList, pattern: Optional[SparsityPattern] = None) -> SparseMatrix:
    """Sum duplicate triplets into CSC storage.  ``pattern`` may be precomputed."""
    if pattern is None:
        pattern = SparsityPattern.from_triplets(t.rows, t.cols, t.n)
    elif pattern.slot.size != t.vals.size or pattern.n != t.n:
        raise ValueError("sparsity pattern was built for different triplets")
    data = np.bincount(pattern.slot, weights=t.vals.data, minlength=pattern.nnz)
    values = record("sparse_assemble", (t.vals,), data, {"slot": pattern.slot})
    return SparseMatrix(pattern, values)


@register_pullback("sparse_assemble")
def _assemble_pb(g, s):
    return (g[s["slot"]],)


def _all_free(n: int) -> np.ndarray:
    return np.arange(n, dtype=np.int64)


def factorize(K: SparseMatrix, free_dofs=None) -> Factorization:
    """Factor ``K[free, free]``; cached on ``K`` so later solves reuse it."""
    free = _all_free(K.n) if free_dofs is None else np.asarray(free_dofs, dtype=np.int64)
    key = free.tobytes()
    cached = K._factors.get(key)
    if cached is not None:
        return cached
    Kr = K.to_scipy()[free][:, free].tocsc()
    diag = Kr.diagonal()
    counters.factorizations += 1
    try:
        lu = spla.splu(Kr, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                       options={"SymmetricMode": True})
    except RuntimeError as exc:
        bad = np.flatnonzero(diag <= 0)
        idx = int(free[bad[0]]) if bad.size else None
        raise FactorizationError(
            f"non-positive pivot at dof {idx}: {exc}" if idx is not None
            else f"factorization failed: {exc}", idx) from None
    piv = lu.U.diagonal()
    bad = np.flatnonzero(~(piv > 0))
    if bad.size:
        # pivot k belongs to reduced column i with perm_c[i] == k
        inv = np.argsort(lu.perm_c)
        idx = int(free[inv[bad[0]]])
        raise FactorizationError(f"non-positive pivot {piv[bad[0]]:.3g} at dof {idx}", idx)
    fac = Factorization(free, Kr, lu)
    K._factors[key] = fac
    return fac


RESIDUAL_TOL = 1e-9


def _solve_reduced(Kr: sp.csc_matrix, fac: Factorization, b: np.ndarray) -> np.ndarray:
    """Solve, refining iteratively (same factor) until ``RESIDUAL_TOL`` is met."""
    x = fac.solve(b)
    nb = np.linalg.norm(b)
    if nb == 0.0:
        return x
    for _ in range(3):
        r = b - Kr @ x
        rel = np.linalg.norm(r) / nb
        if rel <= RESIDUAL_TOL:
            return x
        x = x + fac.solve(r)
    r = b - Kr @ x
    rel = np.linalg.norm(r) / nb
    if not rel <= RESIDUAL_TOL:
        raise SolveError(f"relative residual {rel:.3g} exceeds {RESIDUAL_TOL:g}")
    return x


def solve(K: SparseMatrix, F, free_dofs=None) -> Tensor:
    """``U = K \\ F`` on the free dofs; fixed dofs of ``U`` are zero."""
    F = as_tensor(F)
    if F.shape != (K.n,):
        raise ValueError(f"load vector has shape {F.shape}, matrix is {K.n}x{K.n}")
    fac = factorize(K, free_dofs)
    free = fac.free
    U = np.zeros(K.n)
    U[free] = _solve_reduced(fac.matrix, fac, F.data[free])
    saved = {"fac": fac, "U": U, "rows": K.pattern.indices,
             "cols": K.pattern.column_of_slot(), "n": K.n}
    return record("sparse_solve", (K.values, F), U, saved)


@register_pullback("sparse_solve")
def _solve_pb(g, s):
    fac, U = s["fac"], s["U"]
    free = fac.free
    Fbar = np.zeros(s["n"])
    # K is symmetric, so the adjoint system uses the same factor
    Fbar[free] = _solve_reduced(fac.matrix, fac, g[free])
    Kbar = -Fbar[s["rows"]] * U[s["cols"]]
    return Kbar, Fbar
