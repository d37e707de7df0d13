"""Matplotlib rendering of run outputs.

Every figure here is a view of data that the harness also writes as CSV; the
CSV is the contract, these files are a convenience. All functions save PNG to
a given path and never open a window (Agg backend).
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.patches import Rectangle

from .scenario import ScenarioConfig, zone_mask


def save_training_curves(path, per_seed: dict, mean=None, lo=None, hi=None) -> None:
    """Per-seed reward curves with an optional cross-seed mean and band."""

    fig, ax = plt.subplots(figsize=(7, 4.5))
    for seed, rewards in sorted(per_seed.items()):
        ax.plot(np.arange(len(rewards)), rewards, lw=0.9, alpha=0.55, label=f"seed {seed}")
    if mean is not None:
        x = np.arange(len(mean))
        ax.plot(x, mean, color="black", lw=1.8, label="mean")
        if lo is not None and hi is not None:
            ax.fill_between(x, lo, hi, color="black", alpha=0.15, label="mean +/- var/2")
    ax.set_xlabel("episode")
    ax.set_ylabel("episode reward")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def _draw_grid(ax, cfg: ScenarioConfig):
    y = cfg.grid.y_cells
    for kinds, color, label in ((("no_fly",), "#d95f5f", "no-fly"),
                                (("comm_obstacle",), "#9a9a9a", "comm obstacle"),
                                (("combined",), "#7b4fa6", "combined"),
                                (("start_land",), "#6fbf73", "start/land")):
        mask = zone_mask(cfg, kinds)
        first = True
        for cx in range(y):
            for cy in range(y):
                if mask[cx, cy]:
                    ax.add_patch(Rectangle((cx, cy), 1, 1, facecolor=color, alpha=0.6,
                                           edgecolor="none",
                                           label=label if first else None))
                    first = False
    for i, node in enumerate(cfg.nodes):
        ax.plot(node.cell[0] + 0.5, node.cell[1] + 0.5, "o", color="#1f77b4", ms=7)
        ax.annotate(str(i), (node.cell[0] + 0.62, node.cell[1] + 0.58), fontsize=7)
    for jam in cfg.jammers:
        ax.plot(jam.cell[0] + 0.5, jam.cell[1] + 0.5, "X", color="#b8860b", ms=9)
    ax.set_xlim(0, y)
    ax.set_ylim(0, y)
    ax.set_xticks(range(0, y + 1, max(1, y // 8)))
    ax.set_yticks(range(0, y + 1, max(1, y // 8)))
    ax.set_aspect("equal")
    ax.grid(alpha=0.25, lw=0.4)


def save_trajectory_map(path, cfg: ScenarioConfig, trajectory) -> None:
    """Grid map with zones, nodes (dots), jammers (crosses) and the UAV path."""

    fig, ax = plt.subplots(figsize=(6.2, 6.2))
    _draw_grid(ax, cfg)
    if trajectory:
        xs = [c[0] + 0.5 for c in trajectory]
        ys = [c[1] + 0.5 for c in trajectory]
        ax.plot(xs, ys, "-", color="#d62728", lw=1.6, alpha=0.9, label="trajectory")
        ax.plot(xs[0], ys[0], "s", color="#d62728", ms=9, label="start")
        ax.plot(xs[-1], ys[-1], "*", color="#d62728", ms=13, label="end")
    handles, labels = ax.get_legend_handles_labels()
    uniq = dict(zip(labels, handles))
    ax.legend(uniq.values(), uniq.keys(), fontsize=7, loc="upper right")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_collection_trace(path, cumulative: np.ndarray) -> None:
    """Cumulative data collected per node against communication slot index."""

    fig, ax = plt.subplots(figsize=(7, 4.5))
    slots = np.arange(cumulative.shape[0])
    for i in range(cumulative.shape[1]):
        ax.plot(slots, cumulative[:, i], lw=1.2, label=f"node {i}")
    ax.set_xlabel("communication slot")
    ax.set_ylabel("cumulative collected (Mb)")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_allocation_windows(path, windows: np.ndarray, window_slots: int) -> None:
    """Stacked bars of mean bandwidth fraction per node per slot window."""

    fig, ax = plt.subplots(figsize=(7, 4.5))
    x = np.arange(windows.shape[0])
    bottom = np.zeros(windows.shape[0])
    for i in range(windows.shape[1]):
        ax.bar(x, windows[:, i], bottom=bottom, width=0.8, label=f"node {i}")
        bottom += windows[:, i]
    ax.set_xlabel(f"window ({window_slots} slots each)")
    ax.set_ylabel("mean bandwidth fraction")
    ax.set_ylim(0, 1.02)
    ax.legend(fontsize=7, ncol=2)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_sweep_lines(path, key_name: str, keys, series: dict, ylabel: str) -> None:
    """One line per labelled series over the swept values."""

    fig, ax = plt.subplots(figsize=(7, 4.5))
    for label, vals in series.items():
        ax.plot(keys, vals, "o-", lw=1.4, label=str(label))
    ax.set_xlabel(key_name)
    ax.set_ylabel(ylabel)
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
