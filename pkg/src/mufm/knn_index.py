"""Exact brute-force K-NN over a gallery of unit embeddings.

Stores labeled gallery vectors, retrieves the K nearest to a probe, and
classifies by majority vote.  Galleries here are hundreds of entries, so
an O(n·d) scan with fully specified tie-breaking beats any approximate
structure: results must be reproducible across platforms and sort
implementations.

Ordering contract: ascending distance, ties by ascending source_id.
Vote ties: the tied subject whose nearest member is closest wins;
residual ties go to the lexicographically smaller subject.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .embedding import Embedding, MaskStatus
from .errors import DimensionMismatch, EmptyGallery, NotNormalized

UNIT_NORM_TOLERANCE = 1e-6


class Metric(str, Enum):
    COSINE_DISTANCE = "cosine"  # 1 - cosine similarity
    EUCLIDEAN = "euclidean"

    # On unit vectors the two give identical orderings: d² = 2 - 2·cos.


@dataclass(frozen=True)
class Neighbor:
    source_id: str
    subject: str
    distance: float
    similarity: float


class GalleryIndex:
    """Immutable index over labeled unit embeddings.

    Build once, query concurrently; a changed gallery means a new index.
    """

    def __init__(self, entries: Sequence[Embedding], metric: Metric = Metric.COSINE_DISTANCE):
        items = list(entries)
        if not items:
            raise EmptyGallery("gallery needs at least one entry")
        dim = items[0].dimension
        ids = set()
        for emb in items:
            if emb.dimension != dim:
                raise DimensionMismatch(
                    f"entry {emb.source_id!r} has dimension {emb.dimension}, "
                    f"gallery uses {dim}"
                )
            norm = float(np.linalg.norm(emb.values))
            if abs(norm - 1.0) > UNIT_NORM_TOLERANCE:
                raise NotNormalized(
                    f"entry {emb.source_id!r} has norm {norm:.6f}, expected 1"
                )
            if emb.subject is None:
                raise ValueError(f"entry {emb.source_id!r} has no subject label")
            if emb.source_id in ids:
                raise ValueError(f"duplicate source_id {emb.source_id!r}")
            ids.add(emb.source_id)
        self._metric = Metric(metric)
        self._dimension = dim
        self._ids: Tuple[str, ...] = tuple(e.source_id for e in items)
        self._subjects: Tuple[str, ...] = tuple(e.subject for e in items)
        self._statuses: Tuple[MaskStatus, ...] = tuple(e.mask_status for e in items)
        self._matrix = np.stack([e.values for e in items])
        self._matrix.flags.writeable = False

    @property
    def metric(self) -> Metric:
        return self._metric

    @property
    def dimension(self) -> int:
        return self._dimension

    @property
    def source_ids(self) -> Tuple[str, ...]:
        return self._ids

    @property
    def subjects(self) -> Tuple[str, ...]:
        return self._subjects

    @property
    def mask_statuses(self) -> Tuple[MaskStatus, ...]:
        return self._statuses

    def __len__(self) -> int:
        return len(self._ids)

    def entries(self) -> List[Tuple[str, str, np.ndarray]]:
        return [
            (sid, subj, self._matrix[i])
            for i, (sid, subj) in enumerate(zip(self._ids, self._subjects))
        ]

    def vector_of(self, source_id: str) -> np.ndarray:
        try:
            return self._matrix[self._ids.index(source_id)]
        except ValueError:
            raise KeyError(source_id) from None

    def _check_probe(self, probe: Embedding) -> np.ndarray:
        values = probe.values
        if values.shape[0] != self._dimension:
            raise DimensionMismatch(
                f"probe has dimension {values.shape[0]}, gallery uses {self._dimension}"
            )
        return values

    def query(self, probe: Embedding, k: int) -> List[Neighbor]:
        """The min(k, n) nearest entries, ascending distance then id."""
        if k < 1:
            raise ValueError(f"k must be at least 1, got {k}")
        values = self._check_probe(probe)
        # einsum (unoptimized) reduces each row independently and in the
        # same order, so duplicate vectors get bit-identical dots and the
        # id tie-break actually decides; BLAS matvec rounds per-row
        # differently depending on memory position.
        dots = np.einsum("nd,d->n", self._matrix, values)
        if self._metric == Metric.COSINE_DISTANCE:
            distances = 1.0 - dots
        else:
            diffs = self._matrix - values
            distances = np.sqrt(np.einsum("nd,nd->n", diffs, diffs))
        order = sorted(
            range(len(self._ids)),
            key=lambda i: (distances[i], self._ids[i]),
        )
        return [
            Neighbor(
                source_id=self._ids[i],
                subject=self._subjects[i],
                distance=float(max(distances[i], 0.0)),
                similarity=float(min(1.0, max(-1.0, dots[i]))),
            )
            for i in order[: min(k, len(order))]
        ]

    def classify(self, probe: Embedding, k: int) -> str:
        """Majority subject among the k nearest neighbors."""
        neighbors = self.query(probe, k)
        votes: Dict[str, int] = {}
        nearest: Dict[str, float] = {}
        for nb in neighbors:
            votes[nb.subject] = votes.get(nb.subject, 0) + 1
            if nb.subject not in nearest or nb.distance < nearest[nb.subject]:
                nearest[nb.subject] = nb.distance
        top = max(votes.values())
        tied = [s for s, v in votes.items() if v == top]
        # Vote tie: closest member decides; then lexicographic order.
        tied.sort(key=lambda s: (nearest[s], s))
        return tied[0]


def build(entries: Sequence[Embedding], metric: Metric = Metric.COSINE_DISTANCE) -> GalleryIndex:
    """Construct an index; errors on empty, mixed-dimension, or non-unit input."""
    return GalleryIndex(entries, metric=metric)
