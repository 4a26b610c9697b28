"""Run artifacts: binary PGM density images and convergence CSV."""
from __future__ import annotations

import csv
import os
from pathlib import Path

import numpy as np

CSV_HEADER = ("iter", "objective", "volfrac", "seconds")


def density_to_pixels(x: np.ndarray) -> np.ndarray:
    """Solid (x = 1) maps to black, void to white."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"density field must be 2D, got shape {x.shape}")
    if np.any(~np.isfinite(x)) or x.min() < 0 or x.max() > 1:
        raise ValueError("densities must lie in [0, 1]")
    # round half up; the inner round absorbs representation error (255 * 0.7)
    return np.floor(np.round(255.0 * (1.0 - x), 9) + 0.5).astype(np.uint8)


def write_pgm(x: np.ndarray, path) -> None:
    """Binary (P5) greymap, row 0 = top of the domain."""
    pix = density_to_pixels(x)
    ny, nx = pix.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{nx} {ny}\n255\n".encode("ascii"))
        fh.write(pix.tobytes())


def read_pgm(path) -> np.ndarray:
    """Read a P5 file written by :func:`write_pgm`; returns uint8 pixels."""
    data = Path(path).read_bytes()
    parts = data.split(maxsplit=4)
    if parts[0] != b"P5" or len(parts) < 5:
        raise ValueError(f"{path}: not a binary PGM")
    nx, ny, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    if maxval != 255:
        raise ValueError(f"{path}: only maxval 255 is supported")
    pix = np.frombuffer(parts[4], dtype=np.uint8)
    if pix.size != nx * ny:
        raise ValueError(f"{path}: expected {nx * ny} pixels, found {pix.size}")
    return pix.reshape(ny, nx)


def pixels_to_density(pix: np.ndarray) -> np.ndarray:
    return 1.0 - np.asarray(pix, dtype=np.float64) / 255.0


def write_csv(history, path, timing: bool = True) -> None:
    """One row per iteration.  ``timing=False`` writes 0 seconds, so that
    repeated runs produce byte-identical files."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in history.records:
            w.writerow([r.iter, f"{r.objective:.12g}", f"{r.volfrac:.12g}", f"{r.seconds if timing else 0.0:.9g}"])


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [
            {"iter": int(r["iter"]), "objective": float(r["objective"]),
             "volfrac": float(r["volfrac"]), "seconds": float(r["seconds"])}
            for r in csv.DictReader(fh)
        ]


def ensure_dir(path) -> Path:
    p = Path(path)
    os.makedirs(p, exist_ok=True)
    return p
