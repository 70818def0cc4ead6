"""Reading the prepared dataset layout the matching engine's CLI emits.

The layout is a file-format contract, so it is parsed here from scratch:

    <root>/with_mask/<id>.png
    <root>/without_mask/<id>.png
    <root>/manifest.csv            # id,subject,mask_status,path

The manifest's path column is provenance only; images are always loaded
from the status directories. Without a manifest the folders are scanned.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
from PIL import Image

from .errors import DatasetEmpty, ForgeError

MASKED_DIR = "with_mask"
UNMASKED_DIR = "without_mask"
MANIFEST_NAME = "manifest.csv"
_MANIFEST_HEADER = ["id", "subject", "mask_status", "path"]

#: Classification targets for the training head, in label order.
CLASS_NAMES = ("masked", "unmasked")

_STATUS_TO_DIR = {"masked": MASKED_DIR, "unmasked": UNMASKED_DIR}

#: Side length every image is resized to before entering the backbone.
INPUT_SIZE = 224


@dataclass(frozen=True)
class Item:
    """One labeled training image."""

    source_id: str
    subject: str
    label: int  # index into CLASS_NAMES
    path: Path


def _item(root: Path, source_id: str, subject: str, status: str) -> Item:
    folder = _STATUS_TO_DIR.get(status)
    if folder is None:
        raise ForgeError(f"image {source_id!r}: mask status {status!r} is not trainable")
    path = root / folder / f"{source_id}.png"
    if not path.is_file():
        raise ForgeError(f"manifest lists {source_id!r} but {path} is missing")
    return Item(
        source_id=source_id,
        subject=subject,
        label=CLASS_NAMES.index(status),
        path=path,
    )


def _subject_of(stem: str) -> str:
    return stem.split("__", 1)[0]


def scan(root: Path | str) -> List[Item]:
    """List every trainable image, manifest first, folder scan otherwise.

    Deterministic order (sorted by source_id) so that seeded splits and
    augmentation reproduce exactly.
    """
    root = Path(root)
    manifest = root / MANIFEST_NAME
    items: List[Item] = []
    if manifest.is_file():
        with manifest.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        if not rows or rows[0] != _MANIFEST_HEADER:
            raise ForgeError(f"{manifest}: expected header {','.join(_MANIFEST_HEADER)}")
        for row in rows[1:]:
            if len(row) != 4:
                raise ForgeError(f"{manifest}: malformed row {row!r}")
            source_id, subject, status, _ = row
            if status == "unknown":
                continue  # unlabeled images cannot supervise the head
            items.append(_item(root, source_id, subject, status))
    else:
        for status, folder in _STATUS_TO_DIR.items():
            directory = root / folder
            if not directory.is_dir():
                continue
            for path in directory.glob("*.png"):
                items.append(
                    Item(
                        source_id=path.stem,
                        subject=_subject_of(path.stem),
                        label=CLASS_NAMES.index(status),
                        path=path,
                    )
                )
    items.sort(key=lambda item: item.source_id)
    if not items:
        raise DatasetEmpty(f"no trainable images under {root}")
    return items


# ---------------------------------------------------------------------------
# Image loading and augmentation


@dataclass(frozen=True)
class AugmentRanges:
    """Sampling ranges for the training-time transforms.

    Defaults mirror the dataset-expansion ranges of the matching
    engine's CLI, so curves trained here describe the same distribution
    that engine evaluates on.
    """

    flip_probability: float = 0.5
    rotate_degrees: Tuple[float, float] = (-15.0, 15.0)
    zoom: Tuple[float, float] = (0.9, 1.1)
    shift_fraction: float = 0.10


def _zoom(img: Image.Image, factor: float) -> Image.Image:
    w, h = img.size
    zw, zh = max(1, round(w * factor)), max(1, round(h * factor))
    scaled = img.resize((zw, zh), Image.Resampling.BILINEAR)
    if factor >= 1.0:  # crop the center back to the original frame
        left, top = (zw - w) // 2, (zh - h) // 2
        return scaled.crop((left, top, left + w, top + h))
    canvas = Image.new("RGB", (w, h))
    canvas.paste(scaled, ((w - zw) // 2, (h - zh) // 2))
    return canvas


def augment(img: Image.Image, rng: np.random.Generator, ranges: AugmentRanges) -> Image.Image:
    """One random flip/rotate/zoom/shift chain; rng drives every draw."""
    out = img
    if rng.random() < ranges.flip_probability:
        out = out.transpose(Image.Transpose.FLIP_LEFT_RIGHT)
    angle = float(rng.uniform(*ranges.rotate_degrees))
    out = out.rotate(angle, resample=Image.Resampling.BILINEAR)
    out = _zoom(out, float(rng.uniform(*ranges.zoom)))
    limit = ranges.shift_fraction * min(out.size)
    dx, dy = (float(rng.uniform(-limit, limit)) for _ in range(2))
    return out.transform(
        out.size,
        Image.Transform.AFFINE,
        (1, 0, dx, 0, 1, dy),
        resample=Image.Resampling.BILINEAR,
    )


def load_pixels(
    item: Item,
    rng: Optional[np.random.Generator] = None,
    ranges: Optional[AugmentRanges] = None,
) -> np.ndarray:
    """Read one image as float32 (224, 224, 3) in [0, 1].

    With an rng, a random augmentation chain runs at native size first;
    resizing happens last so transforms see the full source resolution.
    """
    try:
        with Image.open(item.path) as img:
            out = img.convert("RGB")
    except OSError as exc:
        raise ForgeError(f"cannot read {item.path}: {exc}") from exc
    if rng is not None:
        out = augment(out, rng, ranges or AugmentRanges())
    out = out.resize((INPUT_SIZE, INPUT_SIZE), Image.Resampling.BILINEAR)
    return np.asarray(out, dtype=np.float32) / 255.0


def class_counts(items: List[Item]) -> Dict[str, int]:
    counts = {name: 0 for name in CLASS_NAMES}
    for item in items:
        counts[CLASS_NAMES[item.label]] += 1
    return counts
