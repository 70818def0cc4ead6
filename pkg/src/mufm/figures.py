"""Figure rendering for reports and match inspection.

Everything draws through the Agg backend straight to files; no display
is required or touched.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional, Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .errors import IoError
from .evaluation import CurveLog, EvalReport


def _save(fig, path: Union[str, Path]) -> None:
    try:
        fig.savefig(path, dpi=120, bbox_inches="tight")
    except OSError as exc:
        raise IoError(f"cannot write figure {path}: {exc}") from exc
    finally:
        plt.close(fig)


def render_sweep_figure(report: EvalReport, path: Union[str, Path]) -> bool:
    """Accuracy-vs-threshold step plot with the operating threshold
    marked.  Returns False (writing nothing) when the sweep is empty."""
    if not report.sweep:
        return False
    thresholds = [threshold for threshold, _ in report.sweep]
    accuracies = [accuracy for _, accuracy in report.sweep]
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.step(thresholds, accuracies, where="post", color="tab:blue")
    ax.axvline(
        report.threshold_used,
        color="tab:red",
        linestyle="--",
        linewidth=1.0,
        label=f"threshold = {report.threshold_used:g}",
    )
    ax.set_xlabel("similarity threshold")
    ax.set_ylabel("verification accuracy")
    ax.set_title("threshold sweep")
    ax.set_ylim(-0.05, 1.05)
    ax.grid(True, alpha=0.3)
    ax.legend(loc="lower left")
    _save(fig, path)
    return True


def render_curves_figure(curve: CurveLog, path: Union[str, Path]) -> None:
    """Loss and accuracy training curves on twin axes, one point per
    epoch."""
    epochs = [row.epoch for row in curve.rows]
    fig, ax_loss = plt.subplots(figsize=(6.0, 4.0))
    ax_loss.plot(
        epochs, [row.train_loss for row in curve.rows], color="tab:blue",
        label="train loss",
    )
    ax_loss.plot(
        epochs, [row.val_loss for row in curve.rows], color="tab:cyan",
        linestyle="--", label="val loss",
    )
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("loss")
    ax_acc = ax_loss.twinx()
    ax_acc.plot(
        epochs, [row.train_acc for row in curve.rows], color="tab:orange",
        label="train acc",
    )
    ax_acc.plot(
        epochs, [row.val_acc for row in curve.rows], color="tab:red",
        linestyle="--", label="val acc",
    )
    ax_acc.set_ylabel("accuracy")
    ax_acc.set_ylim(-0.05, 1.05)
    handles_l, labels_l = ax_loss.get_legend_handles_labels()
    handles_a, labels_a = ax_acc.get_legend_handles_labels()
    ax_loss.legend(handles_l + handles_a, labels_l + labels_a, loc="center right")
    ax_loss.set_title("training curves")
    ax_loss.grid(True, alpha=0.3)
    _save(fig, path)


def render_match_montage(
    probe_pixels: np.ndarray,
    best_pixels: np.ndarray,
    path: Union[str, Path],
    *,
    probe_id: str,
    best_id: str,
    similarity: float,
    accepted: bool,
    best_subject: Optional[str] = None,
) -> None:
    """Probe and best gallery image side by side, annotated with the
    similarity and the accept/reject outcome."""
    fig, (ax_probe, ax_best) = plt.subplots(1, 2, figsize=(6.0, 3.4))
    ax_probe.imshow(np.clip(probe_pixels, 0.0, 1.0))
    ax_probe.set_title(f"probe: {probe_id}", fontsize=9)
    best_title = f"best: {best_id}"
    if best_subject:
        best_title += f" ({best_subject})"
    ax_best.imshow(np.clip(best_pixels, 0.0, 1.0))
    ax_best.set_title(best_title, fontsize=9)
    for ax in (ax_probe, ax_best):
        ax.set_xticks([])
        ax.set_yticks([])
    verdict = "accepted" if accepted else "rejected"
    fig.suptitle(f"similarity {similarity:.4f} ({verdict})", fontsize=11)
    _save(fig, path)
