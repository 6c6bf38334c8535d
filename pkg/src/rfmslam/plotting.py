"""Matplotlib figures for the CLI reports (file output only)."""

from __future__ import annotations

import math
from typing import Dict, Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .evaluation import AggregateRow, align_points, align_to_anchor  # noqa: E402

# truth green, dead reckoning black, separated solver blue, baseline magenta
COLORS = {"truth": "tab:green", "odometry": "black", "rfm": "tab:blue", "gn": "magenta"}
LABELS = {"truth": "ground truth", "odometry": "odometry", "rfm": "RFM", "gn": "Gauss-Newton"}


def plot_trajectories(
    path,
    truth: np.ndarray,
    estimates: Dict[str, np.ndarray],
    landmarks_gt: Optional[np.ndarray] = None,
    landmarks_est: Optional[Dict[str, np.ndarray]] = None,
    title: str = "",
) -> None:
    """Overlay of the true path and each estimate, all aligned on pose 0.

    ``estimates`` maps a name (``odometry``, ``rfm``, ``gn`` or anything
    else) to an ``(n, 3)`` pose array.
    """
    fig, ax = plt.subplots(figsize=(6.5, 5.5))
    if landmarks_gt is not None and len(landmarks_gt):
        ax.plot(landmarks_gt[:, 0], landmarks_gt[:, 1], "+", color=COLORS["truth"], ms=4, alpha=0.6)
    ax.plot(truth[:, 0], truth[:, 1], "-", color=COLORS["truth"], lw=1.5, label=LABELS["truth"])
    for name, poses in estimates.items():
        aligned = align_to_anchor(poses, truth)
        color = COLORS.get(name)
        ax.plot(aligned[:, 0], aligned[:, 1], "-", color=color, lw=1.0, label=LABELS.get(name, name))
        if landmarks_est and name in landmarks_est and len(landmarks_est[name]):
            lm = align_points(landmarks_est[name], poses[0], truth[0])
            ax.plot(lm[:, 0], lm[:, 1], ".", color=color, ms=3)
    ax.set_aspect("equal", adjustable="datalim")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    if title:
        ax.set_title(title)
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_position_errors(path, truth: np.ndarray, estimates: Dict[str, np.ndarray]) -> None:
    """Per-pose position error after anchor alignment."""
    fig, ax = plt.subplots(figsize=(6.5, 3.5))
    for name, poses in estimates.items():
        err = np.linalg.norm(align_to_anchor(poses, truth)[:, :2] - truth[:, :2], axis=1)
        ax.plot(err, color=COLORS.get(name), lw=1.0, label=LABELS.get(name, name))
    ax.set_xlabel("pose index")
    ax.set_ylabel("position error [m]")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_rmse_vs_beta(path, rows: Sequence[AggregateRow], title: str = "") -> None:
    """Mean RMSE against beta, one line per (solver, alpha)."""
    fig, ax = plt.subplots(figsize=(6.5, 4.5))
    solvers = sorted({r.solver for r in rows})
    alphas = sorted({r.alpha for r in rows})
    styles = ["-", "--", ":", "-."]
    for s in solvers:
        for i, a in enumerate(alphas):
            pts = sorted((r.beta, r.mean_rmse) for r in rows if r.solver == s and r.alpha == a)
            pts = [(b, m) for b, m in pts if not math.isnan(m)]
            if not pts:
                continue
            b, m = zip(*pts)
            ax.plot(
                b, m, styles[i % len(styles)], marker="o", ms=3, color=COLORS.get(s),
                label=f"{LABELS.get(s, s)} alpha={a:g}",
            )
    ax.set_xlabel("beta (range-bearing noise scale)")
    ax.set_ylabel("mean position RMSE [m]")
    if title:
        ax.set_title(title)
    ax.legend(loc="best", fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
