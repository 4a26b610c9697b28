"""Matplotlib figures for run reports.  Everything renders off-screen to files."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
}


def _draw_density(ax, x, title=None):
    ax.imshow(1.0 - np.asarray(x), cmap="gray", vmin=0.0, vmax=1.0, interpolation="none")
    ax.set_xticks([])
    ax.set_yticks([])
    for s in ax.spines.values():
        s.set_visible(True)
    if title:
        ax.set_title(title)


def plot_density(x, path, title=None):
    with plt.rc_context(STYLE):
        ny, nx = np.shape(x)
        fig, ax = plt.subplots(figsize=(4.0, 4.0 * ny / nx + 0.4))
        _draw_density(ax, x, title)
        fig.savefig(path)
        plt.close(fig)


def plot_convergence(histories, path, labels=None, logy=False):
    """Objective against iteration for one or more runs."""
    if not isinstance(histories, (list, tuple)):
        histories = [histories]
    labels = labels or [None] * len(histories)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.0))
        for h, lab in zip(histories, labels):
            ax.plot([r.iter for r in h.records], [r.objective for r in h.records], lw=1.2, label=lab)
        ax.set_xlabel("iteration")
        ax.set_ylabel("objective")
        if logy:
            ax.set_yscale("log")
        if any(labels):
            ax.legend(frameon=False)
        fig.savefig(path)
        plt.close(fig)


def plot_comparison(rows, path):
    """Grid of designs: one row per case, columns = methods.

    ``rows`` is a list of ``(label, {method: (density, displacement)})``.
    """
    methods = list(rows[0][1]) if rows else []
    with plt.rc_context(STYLE):
        ny, nx = np.shape(rows[0][1][methods[0]][0])
        fig, axes = plt.subplots(len(rows), len(methods), squeeze=False,
                                 figsize=(2.6 * len(methods), (2.6 * ny / nx + 0.5) * len(rows)))
        for i, (label, res) in enumerate(rows):
            for j, m in enumerate(methods):
                x, disp = res[m]
                _draw_density(axes[i, j], x, f"{m}  {label}")
                axes[i, j].set_xlabel(f"{disp:.4g}")
        fig.savefig(path)
        plt.close(fig)
