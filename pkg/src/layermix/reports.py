"""Figure rendering for training runs and evaluations.

Everything draws through the Agg backend and writes straight to files, so
these work headless next to the JSON/JSONL outputs they accompany.
"""

from __future__ import annotations

from pathlib import Path
from typing import List, Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt


def plot_training_history(history: List[dict], path: str | Path) -> None:
    """Loss curves per epoch, dev accuracy on a twin axis."""
    epochs = [h["epoch"] for h in history]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.plot(epochs, [h["train_loss"] for h in history], marker="o", label="train loss")
    ax.plot(epochs, [h["dev_loss"] for h in history], marker="s", label="dev loss")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.grid(alpha=0.3)
    twin = ax.twinx()
    twin.plot(
        epochs, [h["dev_accuracy"] for h in history], marker="^", color="tab:green", label="dev accuracy"
    )
    twin.set_ylabel("dev accuracy")
    twin.set_ylim(0.0, 1.05)
    lines, labels = ax.get_legend_handles_labels()
    lines2, labels2 = twin.get_legend_handles_labels()
    ax.legend(lines + lines2, labels + labels2, loc="center right")
    ax.set_title("training history")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_layer_weights(weights: Sequence[float], path: str | Path) -> None:
    """Bar chart of the learned per-layer mixing weights (index 0 is the
    embedding output, the last bar is the top encoder layer)."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    positions = list(range(len(weights)))
    ax.bar(positions, list(weights), color="tab:blue")
    ax.set_xticks(positions)
    ax.set_xlabel("layer")
    ax.set_ylabel("mixing weight")
    ax.set_title("layer mixing weights")
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_confusion_matrix(
    counts: Sequence[Sequence[int]], path: str | Path, class_names: Optional[Sequence[str]] = None
) -> None:
    k = len(counts)
    if class_names is None:
        class_names = [f"class_{c}" for c in range(k)]
    fig, ax = plt.subplots(figsize=(1.2 * k + 3, 1.2 * k + 2.5))
    image = ax.imshow(counts, cmap="Blues")
    fig.colorbar(image, ax=ax, fraction=0.046)
    top = max(max(row) for row in counts) or 1
    for i in range(k):
        for j in range(k):
            ax.text(
                j,
                i,
                str(counts[i][j]),
                ha="center",
                va="center",
                color="white" if counts[i][j] > top / 2 else "black",
            )
    ax.set_xticks(range(k), labels=[str(n) for n in class_names], rotation=45, ha="right")
    ax.set_yticks(range(k), labels=[str(n) for n in class_names])
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    ax.set_title("confusion matrix")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
