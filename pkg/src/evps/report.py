"""Evaluation reports: tab-delimited text plus rendered figures.

The text report has three sections: [summary] key/value pairs,
[config] echoing the fully resolved run configuration, and an optional
[bins] table from event-count binning. Every value row is one
tab-separated record, so the file greps and parses trivially.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .evaluation import BinnedReport, ErrorMap
from .io import ERROR_COLOR_STOPS
from .network import TrainHistory


def write_report(path, summary: dict, config: dict,
                 binned: BinnedReport | None = None):
    """Write the delimited report; floats at 9 decimal places."""
    lines = ["# normal map evaluation", "[summary]"]
    lines += [_row(k, v) for k, v in summary.items()]
    lines.append("")
    lines.append("[config]")
    lines += [_row(k, config[k]) for k in sorted(config)]
    if binned is not None:
        lines.append("")
        lines.append("[bins]")
        lines.append("bin\tlo\thi\tpixels\tmae_degrees")
        for label, lo, hi, count, m in zip(binned.labels, binned.bin_lo,
                                           binned.bin_hi, binned.pixel_counts,
                                           binned.maes):
            mae_text = "nan" if np.isnan(m) else f"{m:.9f}"
            lines.append(f"{label}\t{lo}\t{hi}\t{count}\t{mae_text}")
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _row(key, value):
    if isinstance(value, float):
        return f"{key}\t{value:.9f}"
    return f"{key}\t{value}"


def write_history_csv(history: TrainHistory, path):
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("epoch,loss,val_loss\n")
        for i, loss in enumerate(history.losses):
            val = ""
            if history.val_losses is not None:
                val = f"{history.val_losses[i]:.9f}"
            fh.write(f"{i},{loss:.9f},{val}\n")


def save_error_figure(errmap: ErrorMap, path, max_degrees: float = 45.0):
    """Angular-error image with the package's fixed colormap and a colorbar."""
    cmap = matplotlib.colors.LinearSegmentedColormap.from_list(
        "angular_error", [(s, tuple(c / 255 for c in rgb)) for s, rgb in ERROR_COLOR_STOPS])
    cmap.set_bad("black")
    shown = np.where(errmap.mask, errmap.degrees, np.nan)
    fig, ax = plt.subplots(figsize=(5, 4))
    im = ax.imshow(shown, cmap=cmap, vmin=0.0, vmax=max_degrees,
                   interpolation="nearest")
    fig.colorbar(im, ax=ax, label="angular error (deg)")
    ax.set_title("angular error")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_binned_figure(binned: BinnedReport, path):
    """Bar chart of MAE per event-count bin; empty bins are skipped."""
    filled = binned.pixel_counts > 0
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(np.arange(len(binned.maes))[filled], binned.maes[filled],
           color="tab:blue")
    ax.set_xticks(np.arange(len(binned.maes)))
    ax.set_xticklabels(binned.labels, rotation=45)
    ax.set_xlabel("events per pixel")
    ax.set_ylabel("MAE (deg)")
    ax.set_title("error vs event count")
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_loss_figure(history: TrainHistory, path):
    """Training (and validation, when present) loss curves."""
    epochs = np.arange(len(history.losses))
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(epochs, history.losses, label="train")
    if history.val_losses is not None:
        ax.plot(epochs, history.val_losses, label="validation")
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean cosine loss")
    ax.set_yscale("log")
    ax.set_title("training loss")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
