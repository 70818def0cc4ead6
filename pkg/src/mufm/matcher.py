"""Masked-probe vs unmasked-gallery decision core.

K-NN supplies a shortlist, cosine similarity makes the call: best match
is the shortlist's similarity argmax, accepted when it clears the
threshold.  On unit vectors cosine-distance shortlisting preserves the
cosine argmax, so shortlist_k only truncates what gets reported, never
changes the winner; with shortlist_k >= gallery size this is exactly
global argmax cosine.

Rejection is an explicit outcome (accepted=False with the best candidate
still named), not an error: open-set operation is the normal mode.

The default threshold 0.70 is a documented placeholder; calibrate from
validation pairs with calibrate_threshold whenever scores are available.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import List, Sequence, Tuple

from .embedding import Embedding, MaskStatus, cosine_similarity
from .errors import DimensionMismatch, EmptyScores, ParseError, RoleViolation
from .knn_index import GalleryIndex

DEFAULT_SHORTLIST_K = 5
DEFAULT_THRESHOLD = 0.70


@dataclass(frozen=True)
class MatchConfig:
    shortlist_k: int = DEFAULT_SHORTLIST_K
    threshold: float = DEFAULT_THRESHOLD
    require_unmasked_gallery: bool = True

    def __post_init__(self) -> None:
        if self.shortlist_k < 1:
            raise ValueError(f"shortlist_k must be at least 1, got {self.shortlist_k}")
        if not -1.0 <= self.threshold <= 1.0:
            raise ValueError(f"threshold must lie in [-1, 1], got {self.threshold}")


@dataclass(frozen=True)
class MatchResult:
    probe_id: str
    best_id: str
    best_subject: str
    similarity: float
    accepted: bool
    shortlist: Tuple[Tuple[str, float], ...]  # descending similarity


def _check_roles(index: GalleryIndex, cfg: MatchConfig) -> None:
    if not cfg.require_unmasked_gallery:
        return
    for sid, status in zip(index.source_ids, index.mask_statuses):
        if status == MaskStatus.MASKED:
            raise RoleViolation(
                f"gallery entry {sid!r} is masked; the gallery must hold "
                "unmasked references (set require_unmasked_gallery=False to waive this)"
            )


def match(probe: Embedding, index: GalleryIndex, cfg: MatchConfig = MatchConfig()) -> MatchResult:
    """Match one probe against the gallery."""
    if probe.dimension != index.dimension:
        raise DimensionMismatch(
            f"probe dimension {probe.dimension} vs gallery {index.dimension}"
        )
    _check_roles(index, cfg)
    neighbors = index.query(probe, cfg.shortlist_k)
    scored = []
    for nb in neighbors:
        sim = cosine_similarity(probe.values, index.vector_of(nb.source_id))
        scored.append((nb.source_id, nb.subject, sim))
    # Descending similarity, ties by ascending source_id.
    scored.sort(key=lambda t: (-t[2], t[0]))
    best_id, best_subject, best_sim = scored[0]
    return MatchResult(
        probe_id=probe.source_id,
        best_id=best_id,
        best_subject=best_subject,
        similarity=best_sim,
        accepted=best_sim >= cfg.threshold,
        shortlist=tuple((sid, sim) for sid, _, sim in scored),
    )


def match_all(
    probes: Sequence[Embedding],
    index: GalleryIndex,
    cfg: MatchConfig = MatchConfig(),
) -> List[MatchResult]:
    """Elementwise match; result order follows probe order."""
    return [match(probe, index, cfg) for probe in probes]


def calibrate_threshold(
    genuine: Sequence[float],
    impostor: Sequence[float],
) -> Tuple[float, float]:
    """Pick the accept threshold maximizing plain accuracy.

    Candidates are the midpoints between adjacent distinct scores plus
    the endpoints -1 and +1; accuracy counts genuine >= t as correct
    accepts and impostor < t as correct rejects.  Ties between equally
    good candidates resolve toward the larger threshold.
    """
    gen = [float(s) for s in genuine]
    imp = [float(s) for s in impostor]
    if not gen or not imp:
        raise EmptyScores("calibration needs nonempty genuine and impostor scores")
    distinct = sorted(set(gen) | set(imp))
    candidates = [-1.0]
    for lo, hi in zip(distinct, distinct[1:]):
        candidates.append((lo + hi) / 2.0)
    candidates.append(1.0)
    total = len(gen) + len(imp)
    best_threshold = candidates[0]
    best_accuracy = -1.0
    for t in candidates:
        correct = sum(1 for s in gen if s >= t) + sum(1 for s in imp if s < t)
        accuracy = correct / total
        if accuracy >= best_accuracy:  # >= keeps the largest tied candidate
            best_accuracy = accuracy
            best_threshold = t
    return best_threshold, best_accuracy


# ---------------------------------------------------------------------------
# Match-report lines (JSON, one result per line)


def results_to_jsonl(results: Sequence[MatchResult]) -> str:
    lines = []
    for r in results:
        lines.append(
            json.dumps(
                {
                    "probe_id": r.probe_id,
                    "best_id": r.best_id,
                    "best_subject": r.best_subject,
                    "similarity": r.similarity,
                    "accepted": r.accepted,
                    "shortlist": [[sid, sim] for sid, sim in r.shortlist],
                },
                sort_keys=True,
            )
        )
    return "".join(line + "\n" for line in lines)


def results_from_jsonl(text: str) -> List[MatchResult]:
    """Inverse of results_to_jsonl; ParseError on malformed lines."""
    results = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            results.append(
                MatchResult(
                    probe_id=str(obj["probe_id"]),
                    best_id=str(obj["best_id"]),
                    best_subject=str(obj["best_subject"]),
                    similarity=float(obj["similarity"]),
                    accepted=bool(obj["accepted"]),
                    shortlist=tuple(
                        (str(sid), float(sim)) for sid, sim in obj["shortlist"]
                    ),
                )
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"match report line {lineno}: {exc}") from exc
    return results
