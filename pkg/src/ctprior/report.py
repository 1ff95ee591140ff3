"""Matplotlib figures for run directories (PNG only, Agg backend)."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["plot_traces", "plot_images", "plot_code_sweep"]

_RC = {
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 120,
    "figure.constrained_layout.use": True,
}


def _save(fig, path):
    # fixed metadata keeps the PNG bytes reproducible
    fig.savefig(path, format="png", metadata={"Software": None})
    plt.close(fig)
    return Path(path)


def plot_traces(traces: Mapping[str, tuple[Sequence[float], Sequence[float]]], path, ylabel="PSNR (dB)", title=None):
    """One line per label; each value is ``(iterations, metric)``."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5, 3.4))
        for label, (t, v) in traces.items():
            ax.plot(t, v, label=label, lw=1.2)
        ax.set_xlabel("iteration")
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        if len(traces) > 1:
            ax.legend(frameon=False)
        return _save(fig, path)


def plot_images(images: Sequence[np.ndarray], titles: Sequence[str], path, vmin=None, vmax=None, ncols=None):
    """Greyscale panel grid; ``vmin``/``vmax`` shared by all panels when given."""
    n = len(images)
    ncols = ncols or n
    nrows = -(-n // ncols)
    with plt.rc_context(_RC):
        fig, axes = plt.subplots(nrows, ncols, figsize=(2.2 * ncols, 2.4 * nrows), squeeze=False)
        for ax in axes.flat:
            ax.axis("off")
        for ax, img, title in zip(axes.flat, images, titles):
            ax.imshow(img, cmap="gray", vmin=vmin, vmax=vmax, interpolation="nearest")
            ax.set_title(title)
        return _save(fig, path)


def plot_code_sweep(counts: Sequence[int], final: Sequence[float], best: Sequence[float], path):
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4, 3))
        ax.plot(counts, final, "o-", label="final")
        ax.plot(counts, best, "s--", label="best")
        ax.set_xlabel("number of codes N")
        ax.set_ylabel("mean PSNR (dB)")
        ax.set_xticks(list(counts))
        ax.legend(frameon=False)
        return _save(fig, path)
