"""Figure rendering for report outputs.

Every function draws one figure and writes it to a file; nothing is shown
interactively.  PNG metadata is pinned so identical inputs produce
byte-identical files, which the run-manifest replay contract relies on.
"""
from __future__ import annotations

from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_PNG_METADATA = {"Software": "dropdiag"}


def _save(fig, path):
    fig.savefig(path, dpi=120, metadata=_PNG_METADATA, bbox_inches="tight")
    plt.close(fig)


def save_heatmap_png(
    path, matrix: np.ndarray, row_labels: Sequence[str], col_labels: Sequence[str],
    title: str = "", cmap: str = "viridis", vmin=None, vmax=None,
) -> None:
    matrix = np.asarray(matrix, dtype=np.float64)
    fig, ax = plt.subplots(
        figsize=(1.2 + 0.6 * len(col_labels), 0.8 + 0.45 * len(row_labels))
    )
    im = ax.imshow(matrix, cmap=cmap, aspect="auto", vmin=vmin, vmax=vmax)
    ax.set_xticks(range(len(col_labels)), col_labels, rotation=45, ha="right", fontsize=8)
    ax.set_yticks(range(len(row_labels)), row_labels, fontsize=8)
    if title:
        ax.set_title(title, fontsize=10)
    fig.colorbar(im, ax=ax, fraction=0.046)
    _save(fig, path)


def save_field_png(path, scan, title_prefix: str = "") -> None:
    """Two panels: proximity of the class-1 mean to 0.5, and its variance."""
    extent = (scan.xs[0], scan.xs[-1], scan.ys[0], scan.ys[-1])
    fig, axes = plt.subplots(1, 2, figsize=(9, 4))
    im0 = axes[0].imshow(
        scan.boundary_proximity, origin="lower", extent=extent, cmap="Oranges"
    )
    axes[0].set_title(f"{title_prefix}mean proximity to 0.5", fontsize=10)
    fig.colorbar(im0, ax=axes[0], fraction=0.046)
    im1 = axes[1].imshow(scan.variance, origin="lower", extent=extent, cmap="Greens")
    axes[1].set_title(f"{title_prefix}predictive variance", fontsize=10)
    fig.colorbar(im1, ax=axes[1], fraction=0.046)
    for ax in axes:
        ax.set_xlabel("x1")
        ax.set_ylabel("x2")
    _save(fig, path)


def save_scatter2d_png(path, data, title: str = "") -> None:
    """Class-colored scatter of a 2-feature dataset, faded by low severity."""
    if data.num_features != 2:
        raise ValueError("scatter plot requires exactly 2 features")
    fig, ax = plt.subplots(figsize=(5, 5))
    colors = plt.get_cmap("tab10")
    for label in np.unique(data.labels):
        for sev in np.unique(data.severity[data.labels == label]):
            rows = (data.labels == label) & (data.severity == sev)
            alpha = 0.35 + 0.65 * (sev / 4.0) if sev > 0 else 1.0
            name = data.class_names[label] + (f"-SL{sev}" if sev > 0 else "")
            ax.scatter(
                data.features[rows, 0], data.features[rows, 1],
                s=6, color=colors(label % 10), alpha=alpha, label=name, linewidths=0,
            )
    ax.legend(fontsize=7, markerscale=2)
    ax.set_aspect("equal")
    if title:
        ax.set_title(title, fontsize=10)
    _save(fig, path)


def save_projection_png(path, projected: np.ndarray, data, title: str = "") -> None:
    """Scatter of rows projected to 2 discriminant coordinates."""
    fig, ax = plt.subplots(figsize=(6, 5))
    colors = plt.get_cmap("tab10")
    for label in np.unique(data.labels):
        for sev in np.unique(data.severity[data.labels == label]):
            rows = (data.labels == label) & (data.severity == sev)
            alpha = 0.3 + 0.7 * (sev / 4.0) if sev > 0 else 0.9
            name = data.class_names[label] + (f"-SL{sev}" if sev > 0 else "")
            ax.scatter(
                projected[rows, 0], projected[rows, 1],
                s=8, color=colors(label % 10), alpha=alpha, label=name, linewidths=0,
            )
    ax.legend(fontsize=6, ncols=2, markerscale=2)
    ax.set_xlabel("discriminant 1")
    ax.set_ylabel("discriminant 2")
    if title:
        ax.set_title(title, fontsize=10)
    _save(fig, path)


def save_trace_png(path, trace, title: str = "training trace") -> None:
    epochs = np.arange(len(trace.losses))
    fig, ax1 = plt.subplots(figsize=(6, 3.5))
    ax1.plot(epochs, trace.losses, color="tab:red", label="loss")
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("mean loss", color="tab:red")
    ax2 = ax1.twinx()
    ax2.plot(epochs, trace.accuracies, color="tab:blue", label="accuracy")
    ax2.set_ylabel("accuracy", color="tab:blue")
    ax2.set_ylim(0, 1.02)
    ax1.set_title(title, fontsize=10)
    _save(fig, path)


def save_selection_png(path, report) -> None:
    """Per-rate confidence/variance curves with the chosen rate marked."""
    rates = report.rates
    fig, ax1 = plt.subplots(figsize=(6, 3.5))
    ax1.plot(rates, report.diagonal_means, "o-", color="tab:blue")
    ax1.set_xlabel("dropout rate")
    ax1.set_ylabel("true-class mean confidence", color="tab:blue")
    ax1.axhline(
        report.degradation_floor * report.baseline_diagonal_mean,
        color="tab:blue", linestyle=":", linewidth=1,
    )
    ax2 = ax1.twinx()
    ax2.plot(rates, report.total_variances, "s-", color="tab:green")
    ax2.set_ylabel("mean total variance", color="tab:green")
    ax1.axvline(report.chosen_rate, color="black", linestyle="--", linewidth=1)
    ax1.set_title(f"rate selection: chose p={report.chosen_rate:g}", fontsize=10)
    _save(fig, path)
