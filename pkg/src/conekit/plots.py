"""Figure rendering for run reports (PNG files next to the CSV tables)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def line_plot(path, xs, series: dict, xlabel: str, ylabel: str, title: str,
              logy: bool = False) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for label, ys in series.items():
        ax.plot(xs, ys, marker="o", label=label)
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    if series:
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def residual_bars(path, labels, values, title: str, ylabel: str,
                  threshold: float | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6.5, 4.0))
    pos = np.arange(len(labels))
    ax.bar(pos, values, color="steelblue")
    if threshold is not None:
        ax.axhline(threshold, color="firebrick", linestyle="--",
                   label="tolerance")
        ax.legend(fontsize=8)
    ax.set_xticks(pos)
    ax.set_xticklabels(labels, rotation=30, ha="right", fontsize=7)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    if np.all(np.asarray(values) > 0):
        ax.set_yscale("log")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def mass_histogram(path, masses, pdf=None, title: str = "") -> Path:
    """Total-mass histogram with an optional reference density overlay."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.hist(masses, bins=60, density=True, alpha=0.6, color="steelblue",
            label="samples")
    if pdf is not None:
        grid = np.linspace(0.0, float(np.max(masses)), 400)
        ax.plot(grid, pdf(grid), color="firebrick", label="reference law")
    ax.set_xlabel("total mass")
    ax.set_ylabel("density")
    ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def chain_trace(path, steps, masses, counts, title: str = "") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(6.0, 5.0), sharex=True)
    ax1.plot(steps, masses, lw=0.6, color="steelblue")
    ax1.set_ylabel("total mass")
    ax2.plot(steps, counts, lw=0.6, color="darkorange")
    ax2.set_ylabel("atom count")
    ax2.set_xlabel("sweep")
    fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path
