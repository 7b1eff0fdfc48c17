"""Figure rendering for the report path.

The delimited report files are the contract; these helpers render the same
data as PNGs next to them so a report directory is browsable without
further tooling.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .evaluation import CalibrationResult, ScoredInstance, histogram_counts

CURVE_FIGURE = "curve.png"
HISTOGRAM_FIGURE = "confidence_hist.png"

_IN_COLOR = "#1f77b4"
_OOS_COLOR = "#d62728"


def render_curve_figure(calibration: CalibrationResult, path: str | Path) -> Path:
    """Plot in-domain accuracy, OOS recall, and their sum over the sweep."""
    points = [p for p in calibration.curve if p.threshold <= 1.0]
    thresholds = [p.threshold for p in points]
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.step(thresholds, [p.metrics.acc_in for p in points], where="post",
            label="in-domain accuracy", color=_IN_COLOR)
    ax.step(thresholds, [p.metrics.r_oos for p in points], where="post",
            label="OOS recall", color=_OOS_COLOR)
    ax.step(thresholds, [p.metrics.joint for p in points], where="post",
            label="joint score", color="black", linewidth=1.8)
    ax.axvline(min(calibration.threshold, 1.0), color="gray", linestyle="--",
               linewidth=1.0, label=f"chosen t={min(calibration.threshold, 1.0):.3f}")
    ax.set_xlabel("threshold")
    ax.set_ylabel("score")
    ax.set_xlim(0.0, 1.0)
    ax.set_ylim(0.0, 2.05)
    ax.legend(loc="best", fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_histogram_figure(instances: list[ScoredInstance], path: str | Path) -> Path:
    """Plot confidence distributions for the in-domain and OOS populations."""
    bins = histogram_counts(instances)
    width = bins[0][1] - bins[0][0]
    lows = [lo for lo, _, _, _ in bins]
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.bar(lows, [b[2] for b in bins], width=width, align="edge",
           alpha=0.6, color=_IN_COLOR, label="in-domain")
    ax.bar(lows, [b[3] for b in bins], width=width, align="edge",
           alpha=0.6, color=_OOS_COLOR, label="OOS")
    ax.set_xlabel("confidence")
    ax.set_ylabel("count")
    ax.set_xlim(0.0, 1.0)
    ax.legend(loc="best", fontsize=8)
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
