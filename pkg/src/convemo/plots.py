"""Figure rendering for training logs, eval reports, and ablation summaries.

All functions write PNG files and return the path; nothing is shown
interactively (the Agg backend is forced so headless runs work).
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .metrics import EvalReport

plt.rcParams.update({"figure.dpi": 110, "axes.grid": True, "grid.alpha": 0.3})


def plot_training_curve(log_rows, out_path: str | Path) -> Path:
    """Loss vs. optimizer step, with the learning rate on a twin axis."""
    out_path = Path(out_path)
    steps = [row[0] for row in log_rows]
    lrs = [row[1] for row in log_rows]
    losses = [row[2] for row in log_rows]

    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(steps, losses, color="tab:blue", label="batch loss")
    ax.set_xlabel("step")
    ax.set_ylabel("loss", color="tab:blue")
    ax2 = ax.twinx()
    ax2.plot(steps, lrs, color="tab:orange", alpha=0.7, label="learning rate")
    ax2.set_ylabel("learning rate", color="tab:orange")
    ax2.grid(False)
    ax.set_title("training curve")
    fig.savefig(out_path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return out_path


def plot_eval_report(report: EvalReport, out_path: str | Path) -> Path:
    """Per-class accuracy/F1 bars, or per-dimension correlation bars."""
    out_path = Path(out_path)
    fig, ax = plt.subplots(figsize=(7, 4))
    if report.per_class:
        classes = sorted(report.per_class)
        accs = [report.per_class[c].accuracy for c in classes]
        f1s = [report.per_class[c].f1 for c in classes]
        width = 0.38
        xs = range(len(classes))
        ax.bar([x - width / 2 for x in xs], accs, width, label="accuracy")
        ax.bar([x + width / 2 for x in xs], f1s, width, label="f1")
        ax.axhline(report.weighted_f1, color="gray", linestyle="--", label="weighted f1")
        ax.set_xticks(list(xs), [str(c) for c in classes])
        ax.set_xlabel("class")
        ax.set_ylim(0, 1.05)
        ax.set_title("per-class scores")
        ax.legend(loc="lower right")
    elif report.pearson is not None:
        from .heads import CONTINUOUS_DIM_NAMES

        xs = range(len(CONTINUOUS_DIM_NAMES))
        ax.bar(list(xs), [float(r) for r in report.pearson])
        ax.set_xticks(list(xs), list(CONTINUOUS_DIM_NAMES))
        ax.set_ylabel("pearson r")
        ax.set_title("per-dimension correlation")
    fig.savefig(out_path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return out_path


def plot_ablation_summary(summary, out_path: str | Path, field: str = "weighted_f1") -> Path:
    """Mean score per variant with std error bars."""
    out_path = Path(out_path)
    names = [entry["variant"] for entry in summary]
    means = [entry[f"{field}_mean"] for entry in summary]
    stds = [entry[f"{field}_std"] for entry in summary]

    fig, ax = plt.subplots(figsize=(max(6, 1.4 * len(names)), 4))
    xs = range(len(names))
    ax.bar(list(xs), means, yerr=stds, capsize=4, color="tab:blue", alpha=0.85)
    ax.set_xticks(list(xs), names, rotation=20, ha="right")
    ax.set_ylabel(field)
    ax.set_ylim(0, 1.05)
    ax.set_title("ablation results")
    fig.savefig(out_path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return out_path
