"""Figure rendering for run and benchmark reports.

Everything draws through the Agg backend and writes straight to files,
so report generation works headless.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def save_objective_trace(trace, path, title: str = "objective") -> Path:
    """Line plot of the per-sweep objective values."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6, 4))
    steps = range(1, len(trace) + 1)
    ax.plot(steps, list(trace), marker="o", linewidth=1.5)
    ax.set_xlabel("outer iteration")
    ax.set_ylabel("objective")
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_kernel_weights(weights_by_label: dict, path, title: str = "kernel weights") -> Path:
    """Grouped bar chart of learned kernel weights, one group of bars
    per algorithm label."""
    path = Path(path)
    labels = list(weights_by_label)
    if not labels:
        raise ValueError("no weight vectors to plot")
    m = len(next(iter(weights_by_label.values())))
    fig, ax = plt.subplots(figsize=(max(6, 0.6 * m), 4))
    width = 0.8 / len(labels)
    for i, label in enumerate(labels):
        w = list(weights_by_label[label])
        offsets = [p + (i - (len(labels) - 1) / 2) * width for p in range(len(w))]
        ax.bar(offsets, w, width=width, label=label)
    ax.set_xticks(range(m))
    ax.set_xticklabels([f"K{p+1}" for p in range(m)])
    ax.set_xlabel("kernel")
    ax.set_ylabel("weight")
    ax.set_title(title)
    if len(labels) > 1:
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_cd_diagram(names, mean_ranks, cd: float, path) -> Path:
    """Critical-difference diagram: algorithms on a rank axis with the
    CD interval drawn above; lower rank is better."""
    path = Path(path)
    ranks = [float(r) for r in mean_ranks]
    if len(names) != len(ranks):
        raise ValueError("names and mean_ranks lengths differ")
    k = len(ranks)
    order = sorted(range(k), key=lambda i: ranks[i])
    fig, ax = plt.subplots(figsize=(8, 2.2 + 0.28 * k))
    lo, hi = 1.0, float(k)
    ax.plot([lo, hi], [0, 0], color="black", linewidth=1.2)
    for tick in range(1, k + 1):
        ax.plot([tick, tick], [0, 0.08], color="black", linewidth=1.0)
        ax.text(tick, 0.16, str(tick), ha="center", va="bottom", fontsize=9)
    # CD ruler anchored at the best rank
    ax.plot([lo, lo + cd], [0.55, 0.55], color="black", linewidth=2.5)
    ax.text(lo + cd / 2, 0.62, f"CD = {cd:.4f}", ha="center", fontsize=9)
    for pos, i in enumerate(order):
        side = -1.0
        depth = side * (0.35 + 0.28 * pos)
        ax.plot([ranks[i], ranks[i]], [0, depth], color="gray", linewidth=0.9)
        ax.text(
            ranks[i],
            depth - 0.06,
            f"{names[i]} ({ranks[i]:.2f})",
            ha="center",
            va="top",
            fontsize=9,
        )
    ax.set_ylim(-0.5 - 0.28 * k, 1.0)
    ax.set_xlim(lo - 0.5, hi + 0.5)
    ax.axis("off")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
