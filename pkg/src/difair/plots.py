"""Figure rendering for audit reports and training traces.

Figures are written next to the delimited outputs: a per-group scatter of
the fairness metrics against group size (circles for bottom-level
intersections, squares for top-level groups, diamonds in between), and a
training trace panel.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_MARKERS = {"bottom": "o", "top": "s", "mid": "D"}
_DPI = 120


def _marker_class(level: int, n_attributes: int) -> str:
    if level == n_attributes:
        return "bottom"
    if level == 1:
        return "top"
    return "mid"


def _scatter_metric(ax, rows, n_attributes, attr, label):
    seen = set()
    for row in rows:
        value = getattr(row, attr)
        if value is None or not np.isfinite(value) or row.weight <= 0:
            continue
        cls = _marker_class(row.level, n_attributes)
        name = {"bottom": "intersection", "top": "top-level", "mid": "partial"}[cls]
        ax.scatter(
            row.weight,
            value,
            marker=_MARKERS[cls],
            s=45,
            facecolors="none",
            edgecolors={"bottom": "tab:blue", "top": "tab:red", "mid": "tab:green"}[cls],
            label=name if cls not in seen else None,
        )
        seen.add(cls)
    ax.set_xscale("log")
    ax.set_xlabel("group probability P(g)")
    ax.set_ylabel(label)
    ax.grid(True, which="both", alpha=0.3)
    if seen:
        ax.legend(loc="best", fontsize=8)


def per_group_figure(rows: Sequence, n_attributes: int, path, title: str = "") -> Path:
    """Scatter per-group epsilon and gamma against group size."""
    has_eps = any(r.epsilon is not None for r in rows)
    has_gamma = any(r.gamma is not None for r in rows)
    n_panels = int(has_eps) + int(has_gamma)
    if n_panels == 0:
        n_panels = 1
    fig, axes = plt.subplots(1, n_panels, figsize=(5.2 * n_panels, 4.0), squeeze=False)
    i = 0
    if has_eps:
        _scatter_metric(axes[0][i], rows, n_attributes, "epsilon", "per-group epsilon")
        i += 1
    if has_gamma:
        _scatter_metric(axes[0][i], rows, n_attributes, "gamma", "per-group gamma")
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def trace_figure(trace, path, title: str = "") -> Path:
    """Loss/penalty and fairness metrics over training iterations."""
    records = trace.records
    its = [r.iteration for r in records]
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(6.4, 6.4), sharex=True)
    ax1.plot(its, [r.loss for r in records], label="loss", color="tab:blue")
    ax1.plot(its, [r.penalty for r in records], label="penalty", color="tab:orange")
    ax1.set_ylabel("objective terms")
    ax1.legend(loc="best", fontsize=8)
    ax1.grid(True, alpha=0.3)
    ax2.plot(its, [r.epsilon for r in records], label="epsilon (soft)", color="tab:red")
    ax2.plot(its, [r.gamma for r in records], label="gamma (soft)", color="tab:green")
    dev = [r.dev_accuracy for r in records]
    if np.any(np.isfinite(dev)):
        ax2.plot(its, dev, label="dev accuracy", color="tab:purple", linestyle="--")
    ax2.set_xlabel("iteration")
    ax2.set_ylabel("fairness / accuracy")
    ax2.legend(loc="best", fontsize=8)
    ax2.grid(True, alpha=0.3)
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path
