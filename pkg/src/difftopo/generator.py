"""Convolutional design generator and the volume-fraction projection.

A fixed seed vector passes through a dense layer, is reshaped to a
``c0 x ny/4 x nx/4`` feature map, and is upsampled twice by stride-2
transposed convolutions (ReLU after the first, tanh after the second).  A
frozen 3x3 averaging convolution then smooths the field.  ``project_mass``
turns that raw field into densities with the requested mean.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor, as_tensor, record, register_pullback

PARAM_NAMES = ("dense_w", "dense_b", "ct1_w", "ct1_b", "ct2_w", "ct2_b")


class GeneratorError(ValueError):
    pass


@dataclass
class GeneratorParams:
    nx: int
    ny: int
    arrays: dict
    c0: int = 32
    c1: int = 16
    seed_len: int = 128
    kernel: int = 4

    def flat(self) -> np.ndarray:
        return np.concatenate([self.arrays[k].reshape(-1) for k in PARAM_NAMES])

    def with_flat(self, vec: np.ndarray) -> "GeneratorParams":
        out, i = {}, 0
        for k in PARAM_NAMES:
            a = self.arrays[k]
            out[k] = np.asarray(vec[i:i + a.size], dtype=np.float64).reshape(a.shape).copy()
            i += a.size
        if i != len(vec):
            raise GeneratorError(f"flat parameter vector has {len(vec)} entries, expected {i}")
        return GeneratorParams(self.nx, self.ny, out, self.c0, self.c1, self.seed_len, self.kernel)

    @property
    def size(self) -> int:
        return sum(a.size for a in self.arrays.values())

    def leaves(self, tape: Tape) -> dict:
        return {k: tape.variable(self.arrays[k]) for k in PARAM_NAMES}

    def constants(self) -> dict:
        return {k: Tensor(self.arrays[k]) for k in PARAM_NAMES}


def _check_dims(nx: int, ny: int) -> None:
    if nx % 4 or ny % 4 or nx <= 0 or ny <= 0:
        raise GeneratorError(f"mesh {nx}x{ny}: nx and ny must be positive multiples of 4")


def init_params(nx: int, ny: int, rng_seed: int = 0, *, c0: int = 32, c1: int = 16,
                seed_len: int = 128, kernel: int = 4, gain: float = 0.5) -> GeneratorParams:
    """He-normal weights scaled by ``gain`` (std gain * sqrt(2 / fan_in)), zero biases.

    ``gain=1`` is plain He init.  The smaller default keeps the final tanh
    out of saturation early on, which markedly improves the designs found.
    """
    _check_dims(nx, ny)
    rng = np.random.default_rng(rng_seed)
    hidden = (ny // 4) * (nx // 4) * c0
    k = kernel

    def he(shape, fan_in):
        return rng.normal(0.0, gain * np.sqrt(2.0 / fan_in), size=shape)

    arrays = {
        "dense_w": he((hidden, seed_len), seed_len),
        "dense_b": np.zeros(hidden),
        "ct1_w": he((c0, c1, k, k), c0 * k * k),
        "ct1_b": np.zeros(c1),
        "ct2_w": he((c1, 1, k, k), c1 * k * k),
        "ct2_b": np.zeros(1),
    }
    return GeneratorParams(nx, ny, arrays, c0, c1, seed_len, kernel)


def make_seed(seed_len: int = 128, rng_seed: int = 0) -> np.ndarray:
    """The fixed generator input, drawn once per run."""
    seed = np.random.default_rng([rng_seed, 1]).normal(size=seed_len)
    seed.setflags(write=False)
    return seed


def _smoothing_weights(ny: int, nx: int) -> tuple[np.ndarray, np.ndarray]:
    kern = np.full((1, 1, 3, 3), 1.0 / 9.0)
    counts = ad.conv2d(np.ones((1, ny, nx)), kern, padding=1).data
    return kern, 1.0 / counts


def smooth(field_) -> Tensor:
    """3x3 box average, renormalized at the boundary; input (ny, nx)."""
    field_ = as_tensor(field_)
    ny, nx = field_.shape
    kern, renorm = _smoothing_weights(ny, nx)
    out = ad.conv2d(ad.reshape(field_, (1, ny, nx)), kern, padding=1)
    return ad.reshape(ad.mul(out, renorm), (ny, nx))


def generate_raw(theta, seed, params: GeneratorParams | None = None) -> Tensor:
    """Map generator weights to a (ny, nx) field in [-1, 1].

    ``theta`` is a :class:`GeneratorParams` (evaluated as constants) or a
    dict of tensors from :meth:`GeneratorParams.leaves`, in which case
    ``params`` supplies the layer sizes.
    """
    if isinstance(theta, GeneratorParams):
        params, theta = theta, theta.constants()
    if params is None:
        raise GeneratorError("layer sizes unknown: pass the GeneratorParams")
    nx, ny, c0 = params.nx, params.ny, params.c0
    seed = as_tensor(seed)
    if seed.shape != (params.seed_len,):
        raise GeneratorError(f"dense: seed has shape {seed.shape}, expected ({params.seed_len},)")
    try:
        h = ad.dense(seed, theta["dense_w"], theta["dense_b"])
        h = ad.relu(ad.reshape(h, (c0, ny // 4, nx // 4)))
    except ValueError as exc:
        raise GeneratorError(f"dense: {exc}") from None
    try:
        h = ad.relu(ad.conv_transpose2d(h, theta["ct1_w"], theta["ct1_b"], stride=2, padding=1))
    except ValueError as exc:
        raise GeneratorError(f"conv_transpose 1: {exc}") from None
    try:
        h = ad.tanh(ad.conv_transpose2d(h, theta["ct2_w"], theta["ct2_b"], stride=2, padding=1))
    except ValueError as exc:
        raise GeneratorError(f"conv_transpose 2: {exc}") from None
    if h.shape != (1, ny, nx):
        raise GeneratorError(f"conv_transpose 2: output {h.shape}, expected (1, {ny}, {nx})")
    return smooth(ad.reshape(h, (ny, nx)))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def mass_offset(raw: np.ndarray, volfrac: float, beta: float = 5.0) -> float:
    """Offset b with mean(sigmoid(beta * raw + b)) == volfrac.

    Bisection on a bracket that is widened until it encloses the target,
    then a few Newton steps to reach machine precision.
    """
    if not 0 < volfrac < 1:
        raise ValueError(f"volume fraction must lie in (0, 1), got {volfrac}")
    if beta <= 0:
        raise ValueError("sharpness beta must be positive")
    z = beta * np.asarray(raw, dtype=np.float64)

    def m(b):
        return _sigmoid(z + b).mean()

    lo, hi = -1.0, 1.0
    while m(lo) > volfrac:
        lo *= 2.0
    while m(hi) < volfrac:
        hi *= 2.0
    while hi - lo > 1e-8:
        mid = 0.5 * (lo + hi)
        if m(mid) < volfrac:
            lo = mid
        else:
            hi = mid
    b = 0.5 * (lo + hi)
    for _ in range(3):
        x = _sigmoid(z + b)
        slope = np.mean(x * (1.0 - x))
        if slope <= 0:
            break
        step = (x.mean() - volfrac) / slope
        if not lo - 1e-8 <= b - step <= hi + 1e-8:
            break
        b -= step
    return float(b)


def project_mass(raw, volfrac: float, beta: float = 5.0, detach_offset: bool = False) -> Tensor:
    """Densities ``sigmoid(beta * raw + b)`` with ``b`` set by the volume target.

    By default the pullback accounts for ``b`` moving with ``raw`` (implicit
    derivative of the constraint), which removes the component of the
    adjoint that would only change the total mass.  With
    ``detach_offset=True`` ``b`` is treated as a constant instead.
    """
    raw = as_tensor(raw)
    b = mass_offset(raw.data, volfrac, beta)
    if detach_offset:
        return ad.sigmoid(ad.add(ad.scale(raw, beta), b))
    x = _sigmoid(beta * raw.data + b)
    return record("mass_projection", (raw,), x, {"s": x * (1.0 - x), "beta": float(beta)})


@register_pullback("mass_projection")
def _mass_projection_pb(g, saved):
    s, beta = saved["s"], saved["beta"]
    # db/draw_i = -beta s_i / sum(s)
    return (beta * s * (g - np.sum(s * g) / np.sum(s)),)
