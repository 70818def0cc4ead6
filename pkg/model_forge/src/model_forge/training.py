"""The training loop: brief head training over frozen base features.

With the base fully frozen its features never change, so they are
computed once per image and the epochs iterate only over the small
head; that turns a 20-epoch run on CPU from minutes into seconds.
Partially unfrozen bases fall back to full forward passes per epoch.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
from torch import nn

from . import dataset
from .dataset import Item
from .errors import ForgeError
from .model import IMAGENET_MEAN, IMAGENET_STD, TrainSpec, TransferModel

#: Fraction of each class kept for training; the rest validates.
TRAIN_FRACTION = 0.75

#: Augmented copies added per training image before the epochs start.
#: Sampled once up front: under a frozen base, re-augmenting per epoch
#: would only recompute identical-distribution features at 13-conv cost.
AUG_COPIES = 1

#: Optimizer step size; full-batch Adam on a two-layer head.
ADAM_LR = 1e-3

_FEATURE_BATCH = 8

CURVE_HEADER = ("epoch", "train_loss", "train_acc", "val_loss", "val_acc")


@dataclass(frozen=True)
class EpochMetrics:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float


def _split(items: Sequence[Item], rng: np.random.Generator) -> Tuple[List[Item], List[Item]]:
    """Per-class shuffle and cut; every nonempty class trains."""
    train: List[Item] = []
    val: List[Item] = []
    for label in range(len(dataset.CLASS_NAMES)):
        group = [item for item in items if item.label == label]
        if not group:
            continue
        order = rng.permutation(len(group))
        n_train = min(len(group), max(1, round(TRAIN_FRACTION * len(group))))
        shuffled = [group[i] for i in order]
        train.extend(shuffled[:n_train])
        val.extend(shuffled[n_train:])
    return train, val


def _to_batch(pixel_stack: List[np.ndarray]) -> torch.Tensor:
    """[0, 1] HWC float32 images -> normalized NCHW tensor."""
    arr = np.stack(pixel_stack)
    arr = (arr - np.asarray(IMAGENET_MEAN, dtype=np.float32)) / np.asarray(
        IMAGENET_STD, dtype=np.float32
    )
    return torch.from_numpy(arr).permute(0, 3, 1, 2).contiguous()


def _base_features(model: TransferModel, batch: torch.Tensor) -> torch.Tensor:
    """Pooled base features in inference mode, batched to bound memory."""
    chunks = []
    with torch.no_grad():
        for start in range(0, batch.shape[0], _FEATURE_BATCH):
            chunks.append(model.forward_features(batch[start : start + _FEATURE_BATCH]))
    return torch.cat(chunks)


def _metrics(logits: torch.Tensor, labels: torch.Tensor, loss: torch.Tensor) -> Tuple[float, float]:
    with torch.no_grad():
        acc = (logits.argmax(dim=1) == labels).float().mean()
    return float(loss.detach()), float(acc)


def train(
    model: TransferModel,
    data_dir: Union[str, Path],
    spec: TrainSpec,
    curve_path: Optional[Union[str, Path]] = None,
) -> List[EpochMetrics]:
    """Train the classification head; returns one metrics row per epoch.

    Deterministic for a fixed spec: the seed drives the split and the
    augmentation draws, and full-batch CPU optimization has no further
    randomness. With curve_path the rows are also written as CSV.
    """
    items = dataset.scan(data_dir)
    rng = np.random.default_rng(spec.seed)
    train_items, val_items = _split(items, rng)
    if not val_items:
        # Degenerate tiny datasets: validate on the training images
        # rather than emit empty-set metrics.
        val_items = list(train_items)

    train_pixels = [dataset.load_pixels(item) for item in train_items]
    train_labels = [item.label for item in train_items]
    for _ in range(AUG_COPIES):
        for item in train_items:
            train_pixels.append(dataset.load_pixels(item, rng, spec.augmentation))
            train_labels.append(item.label)
    x_train = _to_batch(train_pixels)
    y_train = torch.tensor(train_labels, dtype=torch.long)
    x_val = _to_batch([dataset.load_pixels(item) for item in val_items])
    y_val = torch.tensor([item.label for item in val_items], dtype=torch.long)

    model.eval()  # the base stack is mode-insensitive; eval() documents intent
    cached = model.base_fully_frozen
    if cached:
        feats_train = _base_features(model, x_train)
        feats_val = _base_features(model, x_val)

    loss_fn = nn.CrossEntropyLoss()
    params = [p for p in model.parameters() if p.requires_grad]
    if not params:
        raise ForgeError("nothing to train: every parameter is frozen")
    optimizer = torch.optim.Adam(params, lr=ADAM_LR)

    rows: List[EpochMetrics] = []
    for epoch in range(1, spec.epochs + 1):
        logits = model.head(feats_train) if cached else model(x_train)
        loss = loss_fn(logits, y_train)
        train_loss, train_acc = _metrics(logits, y_train, loss)

        optimizer.zero_grad()
        loss.backward()
        optimizer.step()

        with torch.no_grad():
            val_logits = model.head(feats_val) if cached else model(x_val)
            val_loss = loss_fn(val_logits, y_val)
        val_loss_f, val_acc = _metrics(val_logits, y_val, val_loss)

        rows.append(
            EpochMetrics(
                epoch=epoch,
                train_loss=train_loss,
                train_acc=train_acc,
                val_loss=val_loss_f,
                val_acc=val_acc,
            )
        )

    if curve_path is not None:
        write_curve_csv(rows, curve_path)
    return rows


def write_curve_csv(rows: Sequence[EpochMetrics], path: Union[str, Path]) -> None:
    """Write the per-epoch metrics CSV the matching engine's report reads."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    try:
        with tmp.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CURVE_HEADER)
            for row in rows:
                writer.writerow(
                    [row.epoch, row.train_loss, row.train_acc, row.val_loss, row.val_acc]
                )
        tmp.replace(path)
    except OSError as exc:
        raise ForgeError(f"cannot write curve log {path}: {exc}") from exc
    finally:
        tmp.unlink(missing_ok=True)
