"""Report figures.  Everything renders off-screen to files."""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
}


def figsize(scale=1.0):
    golden = (math.sqrt(5.0) - 1.0) / 2.0
    width = 6.0 * scale
    return width, width * golden


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_accuracy(report, path) -> Path:
    """Accuracy against training ratio, one line per k; classical KNN dashed."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=figsize())
        for i, k in enumerate(report.ks):
            cells = [report.cell(k, r) for r in report.ratios]
            color = f"C{i}"
            ax.plot(report.ratios, [c.accuracy for c in cells], "o-", color=color, label=f"QKNN k={k}")
            ax.plot(report.ratios, [c.classical_accuracy for c in cells], "x--", color=color, alpha=0.6,
                    label=f"KNN k={k}")
        ax.set_xlabel("training ratio")
        ax.set_ylabel("accuracy")
        ax.set_ylim(0, 1.02)
        ax.legend(ncol=2, frameon=False)
        return _save(fig, path)


def plot_iterations(report, path) -> Path:
    """Histogram of Grover iterations spent as a fraction of the budget."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=figsize(0.8))
        used = np.array([r.grover_iterations / r.budget for r in report.rows])
        ax.hist(used, bins=np.linspace(0, 1, 21), color="C0", edgecolor="white")
        ax.axvline(1.0, color="k", lw=1)
        ax.set_xlabel("Grover iterations / budget")
        ax.set_ylabel("classifications")
        return _save(fig, path)


def plot_distances(names, distances, winners, path) -> Path:
    """Bar chart of test-to-training distances, winning indexes highlighted."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=figsize())
        x = np.arange(1, len(distances) + 1)
        colors = ["C3" if j in winners else "C0" for j in x]
        ax.bar(x, distances, color=colors)
        ax.set_xticks(x)
        ax.set_xticklabels(names, rotation=45, ha="right")
        ax.set_ylabel("swap-test distance")
        return _save(fig, path)


def plot_search_cost(path, ks=(3, 5, 7, 9), max_m: int = 1000) -> Path:
    """Classical M log k against quantum sqrt(kM) search cost."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=figsize())
        M = np.arange(1, max_m + 1)
        for i, k in enumerate(ks):
            ax.plot(M, M * np.log2(k), color=f"C{i}", label=f"M log k, k={k}")
            ax.plot(M, np.sqrt(k * M), color=f"C{i}", ls="--", label=f"sqrt(kM), k={k}")
        ax.set_xlabel("training images M")
        ax.set_ylabel("search cost")
        ax.legend(ncol=2, frameon=False)
        return _save(fig, path)
