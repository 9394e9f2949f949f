"""Static figures written next to the CSV reports."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.patches import Rectangle  # noqa: E402
import numpy as np  # noqa: E402

RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
}


def new_figure(width=4.5, height=None, nrows=1, ncols=1):
    golden = (math.sqrt(5) - 1.0) / 2.0
    with plt.rc_context(RC):
        return plt.subplots(nrows, ncols, figsize=(width, height or width * golden))


def save(fig, path) -> Path:
    path = Path(path)
    with plt.rc_context(RC):
        fig.savefig(path)
    plt.close(fig)
    return path


def plot_training(rows: Sequence, path) -> Path:
    """Accuracy per epoch with the penalty coefficient on a twin axis."""
    fig, ax = new_figure()
    epochs = [r.epoch for r in rows]
    ax.plot(epochs, [r.train_acc for r in rows], label="train")
    ax.plot(epochs, [r.val_acc for r in rows], label="validation")
    ax.set_xlabel("epoch")
    ax.set_ylabel("accuracy")
    ax.legend(loc="lower right")
    twin = ax.twinx()
    twin.plot(epochs, [r.gamma for r in rows], color="0.5", lw=0.8, ls="--")
    twin.set_ylabel("penalty coefficient")
    return save(fig, path)


def plot_confusion(counts: np.ndarray, path, title: str = "") -> Path:
    fig, ax = new_figure(4.0, 4.0)
    frac = counts / np.maximum(counts.sum(axis=1, keepdims=True), 1)
    ax.imshow(frac, cmap="Blues", vmin=0, vmax=1)
    for (i, j), c in np.ndenumerate(counts):
        if c:
            ax.text(j, i, str(c), ha="center", va="center", fontsize=5,
                    color="white" if frac[i, j] > 0.5 else "black")
    ax.set_xticks(range(10))
    ax.set_yticks(range(10))
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    if title:
        ax.set_title(title)
    return save(fig, path)


def plot_sweep(rows: Sequence, path, xlabel: str) -> Path:
    fig, ax = new_figure()
    x = [r.value for r in rows]
    ax.plot(x, [r.accuracy for r in rows], "o-", label="as trained")
    after = [r.accuracy_after_retrain for r in rows]
    if not all(math.isnan(a) for a in after):
        ax.plot(x, after, "s-", label="correcting layer retrained")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("accuracy")
    ax.legend()
    return save(fig, path)


def plot_planes(export, net, path) -> Path:
    """Intensity at every plane, detector regions outlined on the last one."""
    n = len(export.intensities)
    fig, axes = new_figure(2.0 * n, 2.2, ncols=n)
    h, w = net.grid.extent
    ext = (-w / 2, w / 2, -h / 2, h / 2)
    for ax, name, inten in zip(np.atleast_1d(axes), export.names, export.intensities):
        ax.imshow(inten, extent=ext, origin="lower", cmap="inferno")
        ax.set_title(name)
        ax.set_xticks([])
        ax.set_yticks([])
    last = np.atleast_1d(axes)[-1]
    for (cx, cy), s in zip(net.detectors.centers, net.detectors.sides):
        last.add_patch(Rectangle((cx - s / 2, cy - s / 2), s, s, fill=False, ec="cyan", lw=0.6))
    return save(fig, path)
