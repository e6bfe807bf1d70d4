"""Matplotlib renderings written next to the delimited outputs."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .evalharness import METRICS, EvalReport  # noqa: E402


def _finish(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_histogram(values: Sequence[float], path, title: str, xlabel: str,
                   bins: int = 40) -> Path:
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.hist(values, bins=bins, color="#4878a8", edgecolor="white")
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("pairs")
    return _finish(fig, path)


def save_loss_curves(trace: Sequence[dict], path, window: int = 25) -> Path:
    """Per-step loss with a running mean, stage boundaries marked."""
    fig, ax = plt.subplots(figsize=(8, 4))
    steps = [row["step"] for row in trace]
    losses = [row["loss"] for row in trace]
    ax.plot(steps, losses, lw=0.4, alpha=0.35, color="#888888", label="loss")
    if len(losses) >= window:
        smoothed = [
            sum(losses[max(0, i - window + 1) : i + 1]) / len(losses[max(0, i - window + 1) : i + 1])
            for i in range(len(losses))
        ]
        ax.plot(steps, smoothed, lw=1.5, color="#c23b22", label=f"mean({window})")
    boundaries = [
        steps[i] for i in range(1, len(trace)) if trace[i]["stage"] != trace[i - 1]["stage"]
    ]
    for b in boundaries:
        ax.axvline(b, color="#4878a8", lw=0.8, ls="--")
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.legend(loc="upper right", fontsize=8)
    return _finish(fig, path)


def save_metric_bars(means: Mapping[str, float], path, title: str) -> Path:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    xs = range(len(METRICS))
    ax.bar(xs, [means[m] for m in METRICS], color="#4878a8")
    ax.set_xticks(list(xs), METRICS, rotation=15)
    ax.set_ylim(0, 5)
    ax.set_ylabel("mean score")
    ax.set_title(title)
    return _finish(fig, path)


def save_win_tie_loss(report: EvalReport, path, title: str) -> Path:
    """Stacked horizontal win/tie/loss shares per metric."""
    fig, ax = plt.subplots(figsize=(7, 3.5))
    ys = range(len(METRICS))
    wins = [report.relative[m]["win"] for m in METRICS]
    ties = [report.relative[m]["tie"] for m in METRICS]
    losses = [report.relative[m]["loss"] for m in METRICS]
    ax.barh(list(ys), wins, color="#4878a8", label="win")
    ax.barh(list(ys), ties, left=wins, color="#c8c8c8", label="tie")
    ax.barh(list(ys), losses, left=[w + t for w, t in zip(wins, ties)],
            color="#c23b22", label="loss")
    ax.set_yticks(list(ys), METRICS)
    ax.set_xlim(0, 100)
    ax.set_xlabel("%")
    ax.set_title(title)
    ax.legend(loc="lower right", fontsize=8)
    return _finish(fig, path)
