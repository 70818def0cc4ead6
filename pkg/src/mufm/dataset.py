"""Dataset layout and manifest handling.

Prepared datasets live under one root with two folders:

    <root>/with_mask/<subject>__<imgid>.png
    <root>/without_mask/<subject>__<imgid>.png

plus ``manifest.csv`` (header ``id,subject,mask_status,path``).  The
subject is the filename prefix before the double underscore; when a
manifest is present it overrides filename parsing.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Union

from .embedding import MaskStatus
from .errors import ParseError
from .extractor import atomic_write_bytes

MASKED_DIR = "with_mask"
UNMASKED_DIR = "without_mask"
MANIFEST_NAME = "manifest.csv"
_MANIFEST_HEADER = ["id", "subject", "mask_status", "path"]

STATUS_DIRS: Dict[str, MaskStatus] = {
    MASKED_DIR: MaskStatus.MASKED,
    UNMASKED_DIR: MaskStatus.UNMASKED,
}


@dataclass(frozen=True)
class ManifestRow:
    id: str
    subject: str
    mask_status: MaskStatus
    path: str  # provenance only; images load from <root>/<status dir>/<id>.png


def image_path_for(root: Union[str, Path], row: ManifestRow) -> Path:
    """Location of a row's image inside a prepared dataset.

    Derived from id + mask status, never from the manifest's path column
    (that one records where the image CAME from).  Unknown-status rows
    fall back to whichever folder holds the file.
    """
    root = Path(root)
    if row.mask_status is MaskStatus.MASKED:
        candidates = [MASKED_DIR]
    elif row.mask_status is MaskStatus.UNMASKED:
        candidates = [UNMASKED_DIR]
    else:
        candidates = [MASKED_DIR, UNMASKED_DIR]
    for dirname in candidates:
        candidate = root / dirname / f"{row.id}.png"
        if candidate.is_file():
            return candidate
    raise ParseError(f"no image file for id {row.id!r} under {root}")


def subject_of(stem: str) -> str:
    """Subject prefix before '__'; the whole stem when none is present."""
    return stem.split("__", 1)[0]


def write_manifest(rows: List[ManifestRow], path: Union[str, Path]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_MANIFEST_HEADER)
    for row in rows:
        writer.writerow([row.id, row.subject, row.mask_status.value, row.path])
    atomic_write_bytes(path, buf.getvalue().encode("utf-8"))


def read_manifest(path: Union[str, Path]) -> List[ManifestRow]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read manifest: {exc}") from exc
    reader = csv.reader(io.StringIO(text))
    lines = [row for row in reader if row]
    if not lines:
        raise ParseError("manifest is empty")
    if lines[0] != _MANIFEST_HEADER:
        raise ParseError(
            f"manifest header must be {','.join(_MANIFEST_HEADER)}, "
            f"got {','.join(lines[0])}"
        )
    rows = []
    seen = set()
    for lineno, fields in enumerate(lines[1:], start=2):
        if len(fields) != 4:
            raise ParseError(f"line {lineno}: expected 4 fields, got {len(fields)}")
        row_id, subject, status_text, rel_path = fields
        try:
            status = MaskStatus(status_text)
        except ValueError as exc:
            raise ParseError(f"line {lineno}: {exc}") from exc
        if row_id in seen:
            raise ParseError(f"line {lineno}: duplicate id {row_id!r}")
        seen.add(row_id)
        rows.append(
            ManifestRow(id=row_id, subject=subject, mask_status=status, path=rel_path)
        )
    return rows


def scan_prepared(root: Union[str, Path]) -> List[ManifestRow]:
    """Rows for a prepared dataset: manifest when present, else the
    folder layout with filename-parsed subjects."""
    root = Path(root)
    manifest = root / MANIFEST_NAME
    if manifest.is_file():
        return read_manifest(manifest)
    rows = []
    for dirname, status in sorted(STATUS_DIRS.items()):
        folder = root / dirname
        if not folder.is_dir():
            continue
        for image_path in sorted(folder.iterdir()):
            if not image_path.is_file():
                continue
            stem = image_path.stem
            rows.append(
                ManifestRow(
                    id=stem,
                    subject=subject_of(stem),
                    mask_status=status,
                    path=str(Path(dirname) / image_path.name),
                )
            )
    if not rows:
        raise ParseError(
            f"no dataset at {root}: neither {MANIFEST_NAME} nor "
            f"{MASKED_DIR}/{UNMASKED_DIR} folders with images"
        )
    return rows
