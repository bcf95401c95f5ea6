"""Figures for evaluation reports.

Rendering uses the non-interactive Agg backend; every function writes a PNG
and returns its path.
"""

from __future__ import annotations

from math import sqrt
from pathlib import Path
from typing import Dict, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .metrics import ANGLE_THRESHOLDS, FRAME_THRESHOLDS, MismatchReport  # noqa: E402

FIG_WIDTH = 6.4
GOLDEN = (sqrt(5.0) - 1.0) / 2.0
STAGE_COLORS = {"rigid": "#7f7f7f", "nonrigid": "#1f77b4"}

RC = {
    "axes.labelsize": 10,
    "axes.titlesize": 10,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "legend.fontsize": 8,
    "legend.frameon": False,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "font.family": "sans-serif",
    "figure.dpi": 120,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
}


def _color(stage: str, i: int) -> str:
    return STAGE_COLORS.get(stage, f"C{i + 2}")


def plot_mismatch_curves(path, reports: Dict[str, MismatchReport]) -> Path:
    """Matched-bifurcation percentage against frame and angle thresholds."""
    path = Path(path)
    with plt.rc_context(RC):
        fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(FIG_WIDTH, 2 * FIG_WIDTH * GOLDEN * 0.6))
        for i, (stage, rep) in enumerate(reports.items()):
            ax1.step(FRAME_THRESHOLDS, rep.frame_curve, where="post", color=_color(stage, i), label=stage)
            if rep.angle is not None:
                ax2.step(ANGLE_THRESHOLDS, rep.angle_curve, where="post", color=_color(stage, i), label=stage)
        ax1.set_xlabel("frame mismatch threshold (frames)")
        ax2.set_xlabel("angle mismatch threshold (deg)")
        for ax in (ax1, ax2):
            ax.set_ylabel("matched bifurcations (%)")
            ax.set_ylim(0, 102)
            ax.legend(loc="lower right")
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return path


def plot_mismatch_distributions(path, reports: Dict[str, MismatchReport]) -> Path:
    """Per-landmark frame and gated angle mismatches, one violin per stage."""
    path = Path(path)
    stages = list(reports)
    with plt.rc_context(RC):
        fig, axes = plt.subplots(1, 2, figsize=(FIG_WIDTH, FIG_WIDTH * GOLDEN * 0.8))
        for ax, key, label in (
            (axes[0], "frame", "frame mismatch (frames)"),
            (axes[1], "angle", "angle mismatch (deg, gated)"),
        ):
            data, pos, cols = [], [], []
            for i, s in enumerate(stages):
                rows = reports[s].rows
                vals = [r.frame_mismatch for r in rows] if key == "frame" else [r.angle_mismatch for r in rows if r.gated]
                if len(vals) == 0:
                    continue
                data.append(np.asarray(vals, dtype=float))
                pos.append(i)
                cols.append(_color(s, i))
            if data and all(d.size > 1 and np.ptp(d) > 0 for d in data):
                parts = ax.violinplot(data, positions=pos, showmedians=True)
                for body, c in zip(parts["bodies"], cols):
                    body.set_facecolor(c)
                    body.set_alpha(0.5)
            for p, d, c in zip(pos, data, cols):
                ax.scatter(np.full(d.size, p), d, s=8, color=c, zorder=3)
            ax.set_xticks(range(len(stages)))
            ax.set_xticklabels(stages)
            ax.set_ylabel(label)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return path


def plot_loss_history(path, history: Sequence[float], initial: float) -> Path:
    path = Path(path)
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(FIG_WIDTH, FIG_WIDTH * GOLDEN * 0.7))
        y = np.concatenate([[initial], np.asarray(history, dtype=float)])
        ax.plot(np.arange(y.size), y, color=STAGE_COLORS["nonrigid"])
        ax.set_yscale("log")
        ax.set_xlabel("iteration")
        ax.set_ylabel("loss")
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return path
