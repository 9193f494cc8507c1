"""Matplotlib figures written next to the CSV reports."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .synth import CLASS_NAMES  # noqa: E402

# fixed metadata keeps re-rendered PNGs byte-identical
_PNG_META = {"Software": None}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_PNG_META)
    plt.close(fig)


def plot_confusion(cm, path, title="Confusion (row-normalized)"):
    norm = cm.normalized()
    fig, ax = plt.subplots(figsize=(5.5, 4.8))
    im = ax.imshow(norm, vmin=0.0, vmax=1.0, cmap="gray")
    ax.set_xticks(range(len(CLASS_NAMES)), CLASS_NAMES, rotation=45, ha="right")
    ax.set_yticks(range(len(CLASS_NAMES)), CLASS_NAMES)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    for (i, j), v in np.ndenumerate(norm):
        ax.text(j, i, f"{100 * v:.1f}", ha="center", va="center", fontsize=7,
                color="black" if v > 0.5 else "white")
    ax.set_title(title)
    fig.colorbar(im, ax=ax, fraction=0.046)
    _save(fig, path)


def plot_accuracy(report, path, title="Per-class accuracy"):
    fig, ax = plt.subplots(figsize=(5.5, 3.2))
    ax.bar(range(len(CLASS_NAMES)), [100 * a for a in report.per_class], color="0.4")
    ax.axhline(100 * report.mean, color="k", ls="--", lw=1, label=f"mean {100 * report.mean:.1f}")
    ax.set_xticks(range(len(CLASS_NAMES)), CLASS_NAMES, rotation=30, ha="right")
    ax.set_ylim(0, 100)
    ax.set_ylabel("accuracy (%)")
    ax.legend(loc="lower right", fontsize=8)
    ax.set_title(title)
    _save(fig, path)


def plot_training(trainlog, path):
    it = [r.iteration for r in trainlog.records]
    fig, ax = plt.subplots(figsize=(5.5, 3.2))
    ax.plot(it, [r.loss for r in trainlog.records], color="k", lw=1.2, label="loss")
    ax.set_xlabel("iteration")
    ax.set_ylabel("training loss")
    acc = [(r.iteration, r.accuracy) for r in trainlog.records if r.accuracy is not None]
    if acc:
        ax2 = ax.twinx()
        ax2.plot(*zip(*acc), color="tab:blue", lw=1.2, marker="o", ms=3)
        ax2.set_ylabel("held-out mean accuracy", color="tab:blue")
        ax2.set_ylim(0, 1)
    _save(fig, path)
