"""Adam for generator weights, and the SIMP optimality-criteria baseline."""
from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .fem import Material, Mesh, element_energies


@dataclass(frozen=True)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, theta: np.ndarray, **hyper) -> "AdamState":
        return cls(np.zeros_like(theta, dtype=np.float64), np.zeros_like(theta, dtype=np.float64),
                   **hyper)


def adam_step(theta: np.ndarray, grad: np.ndarray, state: AdamState
              ) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam update.  Inputs are not modified."""
    theta = np.asarray(theta, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != theta.shape or state.m.shape != theta.shape:
        raise ValueError(f"adam: theta {theta.shape}, grad {grad.shape}, "
                         f"moments {state.m.shape} must match")
    if not np.all(np.isfinite(grad)):
        raise FloatingPointError("adam: non-finite gradient")
    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    mhat = m / (1.0 - state.beta1 ** t)
    vhat = v / (1.0 - state.beta2 ** t)
    new = theta - state.lr * mhat / (np.sqrt(vhat) + state.eps)
    return new, replace(state, m=m, v=v, t=t)


def sensitivity(x: np.ndarray, U: np.ndarray, mesh: Mesh, mat: Material,
                K0: np.ndarray) -> np.ndarray:
    """dC/dx_e = -p x_e^(p-1) (E0 - Emin) u_e^T K0 u_e for a fixed load."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (mesh.ny, mesh.nx):
        raise ValueError(f"density shape {x.shape} does not match mesh ({mesh.ny}, {mesh.nx})")
    ce = element_energies(mesh, U, K0)
    return -mat.p * x ** (mat.p - 1.0) * (mat.E0 - mat.Emin) * ce


@lru_cache(maxsize=16)
def _filter_matrix(ny: int, nx: int, rmin: float) -> tuple[sp.csr_matrix, np.ndarray]:
    r = int(np.ceil(rmin)) - 1
    iy, ix = np.divmod(np.arange(nx * ny), nx)
    rows, cols, vals = [], [], []
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            w = rmin - np.hypot(dx, dy)
            if w <= 0:
                continue
            jy, jx = iy + dy, ix + dx
            ok = (jy >= 0) & (jy < ny) & (jx >= 0) & (jx < nx)
            rows.append(np.flatnonzero(ok))
            cols.append(jy[ok] * nx + jx[ok])
            vals.append(np.full(ok.sum(), w))
    H = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(nx * ny, nx * ny))
    return H, np.asarray(H.sum(axis=1)).ravel()


def density_filter(field: np.ndarray, rmin: float = 1.5) -> np.ndarray:
    """Cone-weighted neighbourhood mean with weights max(0, rmin - distance)."""
    if rmin < 1:
        raise ValueError("filter radius must be at least 1 element")
    field = np.asarray(field, dtype=np.float64)
    ny, nx = field.shape
    H, Hs = _filter_matrix(ny, nx, float(rmin))
    return (H @ field.ravel() / Hs).reshape(ny, nx)


def filter_sensitivity(x: np.ndarray, dc: np.ndarray, rmin: float = 1.5) -> np.ndarray:
    """Sensitivity filter: smooth x * dc, then divide by max(1e-3, x)."""
    return density_filter(x * dc, rmin) / np.maximum(1e-3, x)


@dataclass(frozen=True)
class OCParams:
    move: float = 0.2
    eta: float = 0.5
    tol: float = 1e-4

    def __post_init__(self):
        if not 0 < self.move <= 1:
            raise ValueError("move limit must lie in (0, 1]")
        if not 0 < self.eta <= 1:
            raise ValueError("damping exponent must lie in (0, 1]")


def _oc_candidate(x, dc, lam, params):
    cand = x * (-dc / lam) ** params.eta
    return np.clip(cand, np.maximum(0.0, x - params.move), np.minimum(1.0, x + params.move))


def oc_update(x: np.ndarray, dc: np.ndarray, volfrac: float,
              params: OCParams = OCParams()) -> np.ndarray:
    """Optimality-criteria update with a bisection on the Lagrange multiplier.

    Each element moves to ``x * B^eta`` with ``B = -dc / lambda``, clipped to
    the move limit and to [0, 1]; lambda is chosen so the mean density hits
    ``volfrac``.
    """
    x = np.asarray(x, dtype=np.float64)
    dc = np.asarray(dc, dtype=np.float64)
    if dc.shape != x.shape:
        raise ValueError(f"oc_update: x {x.shape} and dc {dc.shape} differ")
    # exact zeros occur where the filter window is entirely void
    if np.any(dc > 0):
        raise ValueError("oc_update: positive compliance sensitivity (sign error upstream)")
    # mean density decreases as lambda grows; bisect in log space
    lo, hi = -80.0, 80.0
    xn = x
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        xn = _oc_candidate(x, dc, np.exp(mid), params)
        err = xn.mean() - volfrac
        if abs(err) <= 1e-3 * params.tol:
            break
        if err > 0:
            lo = mid
        else:
            hi = mid
    return xn


def grayness(x: np.ndarray) -> float:
    """Mean of 4 x (1 - x): 0 for a 0/1 design, 1 for all-gray 0.5."""
    x = np.asarray(x)
    return float(np.mean(4.0 * x * (1.0 - x)))
