"""HTTP verification service: enroll unmasked gallery identities,
match probes against them.

The gallery lives in one embeddings file (the extractor's format) and
an in-memory index.  Mutations serialize behind a lock and persist to
disk BEFORE the in-memory snapshot is swapped, so an acknowledged
enrollment survives a crash at any point.  Reads never take the lock;
they grab the current immutable snapshot, whose generation number is
echoed in every response.
"""

from __future__ import annotations

import base64
import binascii
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
from fastapi import FastAPI
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .embedding import Embedding, MaskStatus, l2_normalize
from .errors import (
    CorruptStream,
    DimensionMismatch,
    DuplicateSourceId,
    MufmError,
    UnsupportedFormat,
    ZeroVector,
)
from .extractor import Extractor, load_precomputed, save_embeddings
from .imaging import (
    ImageRecord,
    PreprocessConfig,
    decode_image,
    ensure_rgb,
    preprocess,
)
from .knn_index import GalleryIndex, Metric
from .matcher import DEFAULT_SHORTLIST_K, DEFAULT_THRESHOLD, MatchConfig, match


@dataclass(frozen=True)
class Snapshot:
    """One immutable gallery state; whole-object swap keeps readers
    consistent without locking."""

    generation: int
    entries: Tuple[Embedding, ...]
    index: Optional[GalleryIndex]  # None while the gallery is empty

    @property
    def dimension(self) -> Optional[int]:
        return self.entries[0].dimension if self.entries else None


class GalleryStore:
    """Persistent gallery with generation-tagged snapshots.

    The file at ``path`` is the single source of truth; it is rewritten
    atomically on every mutation and reloaded verbatim on startup, so
    two processes started from the same file serve identical galleries.
    """

    def __init__(self, path: Union[str, Path], metric: Metric = Metric.COSINE_DISTANCE):
        self._path = Path(path)
        self._metric = metric
        self._write_lock = threading.Lock()
        entries: Tuple[Embedding, ...] = ()
        if self._path.exists():
            entries = tuple(load_precomputed(self._path))
        self._snapshot = Snapshot(
            generation=0,
            entries=entries,
            index=self._build_index(entries),
        )

    def _build_index(self, entries: Tuple[Embedding, ...]) -> Optional[GalleryIndex]:
        if not entries:
            return None
        return GalleryIndex(list(entries), metric=self._metric)

    @property
    def path(self) -> Path:
        return self._path

    def snapshot(self) -> Snapshot:
        return self._snapshot

    def _commit(self, entries: Tuple[Embedding, ...]) -> Snapshot:
        # Persist first: the write is acknowledged only after the file
        # reflects it, so the snapshot swap can never outrun the disk.
        save_embeddings(list(entries), self._path)
        snapshot = Snapshot(
            generation=self._snapshot.generation + 1,
            entries=entries,
            index=self._build_index(entries),
        )
        self._snapshot = snapshot
        return snapshot

    def enroll(self, embedding: Embedding) -> Snapshot:
        with self._write_lock:
            current = self._snapshot
            if any(e.source_id == embedding.source_id for e in current.entries):
                raise DuplicateSourceId(
                    f"source_id {embedding.source_id!r} is already enrolled"
                )
            if current.dimension is not None and embedding.dimension != current.dimension:
                raise DimensionMismatch(
                    f"embedding has dimension {embedding.dimension}, "
                    f"store uses {current.dimension}"
                )
            return self._commit(current.entries + (embedding,))

    def remove(self, source_id: str) -> Snapshot:
        with self._write_lock:
            current = self._snapshot
            kept = tuple(e for e in current.entries if e.source_id != source_id)
            if len(kept) == len(current.entries):
                raise KeyError(source_id)
            return self._commit(kept)

    def fresh_source_id(self, subject: str) -> str:
        """A subject-prefixed id not present in the current snapshot."""
        taken = {e.source_id for e in self._snapshot.entries}
        n = 0
        while f"{subject}__e{n:03d}" in taken:
            n += 1
        return f"{subject}__e{n:03d}"


# ---------------------------------------------------------------------------
# HTTP layer


class EnrollRequest(BaseModel):
    subject: str
    source_id: Optional[str] = None
    values: Optional[List[float]] = None
    image_b64: Optional[str] = None


class MatchRequest(BaseModel):
    values: Optional[List[float]] = None
    image_b64: Optional[str] = None
    probe_id: str = "probe"
    k: Optional[int] = None
    threshold: Optional[float] = None


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"detail": message})


def create_app(
    store: GalleryStore,
    *,
    extractor: Optional[Extractor] = None,
    default_threshold: float = DEFAULT_THRESHOLD,
    default_k: int = DEFAULT_SHORTLIST_K,
) -> FastAPI:
    """Wire the routes around one store.  ``extractor`` enables image
    bodies; without it only embedding values are accepted."""
    app = FastAPI(title="mufm verification service")

    def embed_from_request(
        values: Optional[List[float]],
        image_b64: Optional[str],
        source_id: str,
        subject: Optional[str],
        mask_status: MaskStatus,
    ) -> Union[Embedding, JSONResponse]:
        has_values = values is not None
        has_image = image_b64 is not None
        if has_values == has_image:
            return _error(400, "provide exactly one of 'values' or 'image_b64'")
        if has_values:
            try:
                vector = l2_normalize(np.asarray(values, dtype=np.float64))
            except ZeroVector:
                return _error(400, "embedding values must not be all zero")
            if not np.all(np.isfinite(values)):
                return _error(400, "embedding values must be finite")
            return Embedding(
                values=vector,
                source_id=source_id,
                subject=subject,
                mask_status=mask_status,
            )
        if extractor is None:
            return _error(503, "image input requires a model; start with --model")
        try:
            raw = base64.b64decode(image_b64, validate=True)
        except (binascii.Error, ValueError):
            return _error(400, "image_b64 is not valid base64")
        try:
            pixels = decode_image(raw)
        except (UnsupportedFormat, CorruptStream) as exc:
            return _error(400, str(exc))
        pixels = ensure_rgb(pixels)
        record = ImageRecord(
            id=source_id, subject=subject or source_id,
            mask_status=mask_status, pixels=pixels,
        )
        tensor = preprocess(record, PreprocessConfig())
        return extractor.extract(tensor, source_id, subject, mask_status)

    @app.post("/gallery", status_code=201)
    def enroll(body: EnrollRequest):
        if not body.subject:
            return _error(400, "subject must be non-empty")
        source_id = body.source_id or store.fresh_source_id(body.subject)
        made = embed_from_request(
            body.values, body.image_b64, source_id, body.subject, MaskStatus.UNMASKED
        )
        if isinstance(made, JSONResponse):
            return made
        try:
            snapshot = store.enroll(made)
        except DuplicateSourceId as exc:
            return _error(409, str(exc))
        except DimensionMismatch as exc:
            return _error(400, str(exc))
        return {
            "source_id": source_id,
            "subject": body.subject,
            "generation": snapshot.generation,
            "size": len(snapshot.entries),
        }

    @app.post("/match")
    def run_match(body: MatchRequest):
        snapshot = store.snapshot()
        if snapshot.index is None:
            return _error(404, "gallery is empty; enroll before matching")
        made = embed_from_request(
            body.values, body.image_b64, body.probe_id, None, MaskStatus.UNKNOWN
        )
        if isinstance(made, JSONResponse):
            return made
        try:
            cfg = MatchConfig(
                shortlist_k=body.k if body.k is not None else default_k,
                threshold=(
                    body.threshold if body.threshold is not None else default_threshold
                ),
            )
        except ValueError as exc:
            return _error(400, str(exc))
        try:
            result = match(made, snapshot.index, cfg)
        except DimensionMismatch as exc:
            return _error(400, str(exc))
        except MufmError as exc:
            return _error(400, str(exc))
        return {
            "probe_id": result.probe_id,
            "best_id": result.best_id,
            "best_subject": result.best_subject,
            "similarity": result.similarity,
            "accepted": result.accepted,
            "shortlist": [
                {"source_id": sid, "similarity": sim} for sid, sim in result.shortlist
            ],
            "generation": snapshot.generation,
        }

    @app.get("/gallery")
    def list_gallery():
        snapshot = store.snapshot()
        return {
            "generation": snapshot.generation,
            "size": len(snapshot.entries),
            "entries": [
                {
                    "source_id": e.source_id,
                    "subject": e.subject,
                    "mask_status": e.mask_status.value,
                }
                for e in snapshot.entries
            ],
        }

    @app.delete("/gallery/{source_id}")
    def remove_entry(source_id: str):
        try:
            snapshot = store.remove(source_id)
        except KeyError:
            return _error(404, f"no gallery entry with source_id {source_id!r}")
        return {
            "source_id": source_id,
            "generation": snapshot.generation,
            "size": len(snapshot.entries),
        }

    @app.get("/healthz")
    def healthz():
        snapshot = store.snapshot()
        return {
            "status": "ok",
            "generation": snapshot.generation,
            "size": len(snapshot.entries),
        }

    return app


def serve(
    store_path: Union[str, Path],
    *,
    host: str = "127.0.0.1",
    port: int = 8000,
    model_path: Optional[Union[str, Path]] = None,
    threshold: float = DEFAULT_THRESHOLD,
    k: int = DEFAULT_SHORTLIST_K,
) -> None:
    """Blocking entry point used by the CLI's serve subcommand."""
    import uvicorn

    store = GalleryStore(store_path)
    extractor = Extractor.for_model(model_path) if model_path else None
    app = create_app(
        store, extractor=extractor, default_threshold=threshold, default_k=k
    )
    uvicorn.run(app, host=host, port=port, log_level="warning")
