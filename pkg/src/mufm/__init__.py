"""Masked/unmasked face matching engine.

Pipeline: preprocess paired face images, extract pooled CNN embeddings
from an interchange model file (or load precomputed ones), index the
unmasked gallery with exact K-NN, and decide masked-probe matches by
cosine similarity against a calibrated threshold.
"""

from .embedding import (
    DEFAULT_DIMENSION,
    Embedding,
    MaskStatus,
    cosine_similarity,
    global_average_pool,
    l2_normalize,
    similarity_matrix,
)
from .errors import MufmError
from .evaluation import EvalReport, evaluate, split_pairs
from .extractor import Extractor, load_precomputed, save_embeddings
from .knn_index import GalleryIndex, Metric, Neighbor
from .matcher import (
    DEFAULT_SHORTLIST_K,
    DEFAULT_THRESHOLD,
    MatchConfig,
    MatchResult,
    calibrate_threshold,
    match,
    match_all,
)

__all__ = [
    "DEFAULT_DIMENSION",
    "DEFAULT_SHORTLIST_K",
    "DEFAULT_THRESHOLD",
    "Embedding",
    "EvalReport",
    "Extractor",
    "GalleryIndex",
    "MaskStatus",
    "MatchConfig",
    "MatchResult",
    "Metric",
    "MufmError",
    "Neighbor",
    "calibrate_threshold",
    "cosine_similarity",
    "evaluate",
    "global_average_pool",
    "l2_normalize",
    "load_precomputed",
    "match",
    "match_all",
    "save_embeddings",
    "similarity_matrix",
    "split_pairs",
]

__version__ = "0.1.0"
