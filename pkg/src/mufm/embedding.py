"""Embedding vectors and the similarity algebra the engine is built on.

All similarity math accumulates in float64 regardless of how vectors are
stored on disk, and cosine results are clamped to [-1, 1] so rounding can
never leak an out-of-range score downstream.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionMismatch, ZeroVector

#: Channel count of a typical final convolutional stage feeding the pooled
#: vector; files carry their own dimension, this is only the default.
DEFAULT_DIMENSION = 512

#: Norms at or below this are treated as zero vectors.
ZERO_NORM_TOLERANCE = 1e-12


class MaskStatus(str, Enum):
    UNMASKED = "unmasked"
    MASKED = "masked"
    UNKNOWN = "unknown"


@dataclass(frozen=True, eq=False)
class Embedding:
    """Fixed-length real vector summarizing one face image.

    `values` is coerced to a read-only float64 1-D array; all entries must
    be finite.
    """

    values: np.ndarray
    source_id: str
    subject: str | None = None
    mask_status: MaskStatus = MaskStatus.UNKNOWN

    def __post_init__(self) -> None:
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise DimensionMismatch(
                f"embedding values must be a nonempty 1-D vector, got shape {arr.shape}"
            )
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"embedding {self.source_id!r} contains non-finite values")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @property
    def dimension(self) -> int:
        return self.values.shape[0]

    def __eq__(self, other: object) -> bool:
        # Dataclass-generated equality chokes on array fields.
        if not isinstance(other, Embedding):
            return NotImplemented
        return (
            self.source_id == other.source_id
            and self.subject == other.subject
            and self.mask_status == other.mask_status
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None  # array field makes value hashing unreliable


def global_average_pool(feature_map: np.ndarray) -> np.ndarray:
    """Collapse an (H, W, C) feature map to a length-C vector of per-channel
    spatial means."""
    fmap = np.asarray(feature_map, dtype=np.float64)
    if fmap.ndim != 3:
        raise DimensionMismatch(f"feature map must be (H, W, C), got shape {fmap.shape}")
    return fmap.mean(axis=(0, 1))


def l2_normalize(v: np.ndarray) -> np.ndarray:
    """Scale `v` to unit Euclidean norm.

    Raises ZeroVector when the norm is at or below ZERO_NORM_TOLERANCE: a
    hard error beats silently returning a garbage direction.
    """
    vec = np.asarray(v, dtype=np.float64)
    norm = float(np.linalg.norm(vec))
    if norm <= ZERO_NORM_TOLERANCE:
        raise ZeroVector(f"cannot normalize vector with norm {norm:g}")
    return vec / norm


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Dot product of the two vectors divided by the product of their
    magnitudes, clamped to [-1, 1] against rounding overshoot.

    1 means identical direction, 0 orthogonal, -1 opposite.
    """
    va = np.asarray(a, dtype=np.float64)
    vb = np.asarray(b, dtype=np.float64)
    if va.shape != vb.shape or va.ndim != 1:
        raise DimensionMismatch(
            f"cosine similarity needs equal-length vectors, got {va.shape} vs {vb.shape}"
        )
    na = float(np.linalg.norm(va))
    nb = float(np.linalg.norm(vb))
    if na <= ZERO_NORM_TOLERANCE or nb <= ZERO_NORM_TOLERANCE:
        raise ZeroVector("cosine similarity undefined for zero vectors")
    sim = float(np.dot(va, vb)) / (na * nb)
    return min(1.0, max(-1.0, sim))


def _stack(embeddings: Sequence[Embedding] | np.ndarray) -> np.ndarray:
    if isinstance(embeddings, np.ndarray):
        mat = np.asarray(embeddings, dtype=np.float64)
        if mat.ndim != 2:
            raise DimensionMismatch(f"expected a 2-D array, got shape {mat.shape}")
        return mat
    rows = [np.asarray(e.values, dtype=np.float64) for e in embeddings]
    dims = {r.shape[0] for r in rows}
    if len(dims) > 1:
        raise DimensionMismatch(f"mixed embedding dimensions: {sorted(dims)}")
    return np.stack(rows)


def similarity_matrix(
    probes: Sequence[Embedding] | np.ndarray,
    gallery: Sequence[Embedding] | np.ndarray,
) -> np.ndarray:
    """Pairwise cosine similarities, M[i, j] = cos(probes[i], gallery[j]).

    Rows/columns keep input order; the reduction per entry is a plain
    float64 dot product, so repeat calls on the same build are
    bit-identical.
    """
    p = _stack(probes)
    g = _stack(gallery)
    if p.shape[1] != g.shape[1]:
        raise DimensionMismatch(
            f"probe dimension {p.shape[1]} != gallery dimension {g.shape[1]}"
        )
    pnorm = np.linalg.norm(p, axis=1)
    gnorm = np.linalg.norm(g, axis=1)
    if np.any(pnorm <= ZERO_NORM_TOLERANCE) or np.any(gnorm <= ZERO_NORM_TOLERANCE):
        raise ZeroVector("similarity matrix undefined for zero vectors")
    mat = (p / pnorm[:, None]) @ (g / gnorm[:, None]).T
    return np.clip(mat, -1.0, 1.0)
