"""Figures written next to the tabular reports."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

plt.rcParams.update({
    "font.size": 8,
    "axes.linewidth": 0.6,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.fontsize": 7,
    "legend.frameon": False,
})

STAGE_COLORS = {1: "#4c72b0", 2: "#dd8452", 3: "#55a868"}


def _save(fig, path):
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_loss_curve(loss_log, path):
    """Per-step answer loss, coloured by stage."""
    fig, ax = plt.subplots(figsize=(4.5, 2.6), constrained_layout=True)
    for stage in sorted({r["stage"] for r in loss_log}):
        pts = [(r["step"], r["loss"]) for r in loss_log if r["stage"] == stage]
        ax.plot([p[0] for p in pts], [p[1] for p in pts], lw=0.6,
                color=STAGE_COLORS.get(stage, "k"), label=f"stage {stage}")
    ax.set_xlabel("step")
    ax.set_ylabel("answer loss")
    ax.legend()
    return _save(fig, path)


def plot_beta_sweep(rows, path):
    """Precision, recall, F1 and training time against the oversampling target."""
    betas = [r["beta"] for r in rows]
    panels = [("precision", "Precision"), ("recall", "Recall"), ("f1", "F1-score"),
              ("training_seconds", "Training time (s)")]
    fig, axes = plt.subplots(2, 2, figsize=(5.5, 4.0), constrained_layout=True)
    for ax, (key, title) in zip(axes.flat, panels):
        ys = [r[key] if isinstance(r[key], (int, float)) else float("nan") for r in rows]
        ax.plot(betas, ys, marker="o", ms=3, lw=1)
        ax.set_title(title)
        ax.set_xlabel("beta")
        if key != "training_seconds":
            ax.set_ylim(-0.02, 1.02)
    return _save(fig, path)


def plot_f1_bars(labels, values, path, title="F1 by plan"):
    fig, ax = plt.subplots(figsize=(4.0, 2.4), constrained_layout=True)
    ax.bar(range(len(values)), values, color="#4c72b0")
    ax.set_xticks(range(len(values)))
    ax.set_xticklabels(labels, rotation=20, ha="right")
    ax.set_ylim(0, 1.02)
    ax.set_ylabel("F1")
    ax.set_title(title)
    return _save(fig, path)
