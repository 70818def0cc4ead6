"""Measurement surface: splits, accuracies, sweeps, curve logs, reports.

Two accuracies are always reported side by side: closed-set rank-1
(threshold-free: was the top gallery subject correct) and thresholded
(correct AND accepted).  The headline claim this pipeline targets is
ambiguous between the two, so both bracket it.

Report files: ``report.json`` (full structure), ``report.txt`` (method
comparison table), ``curves.csv`` (per-epoch series when a curve log is
supplied).
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import (
    IoError,
    NonConsecutiveEpochs,
    ParseError,
    TooFewSubjects,
    UnknownProbe,
)
from .matcher import DEFAULT_THRESHOLD, MatchResult

# Reported scores from the masked-face-matching comparison this engine
# is measured against; kept verbatim for the report table.
REFERENCE_ROWS: Tuple[Tuple[str, float], ...] = (
    ("Cosine Similarity", 0.95),
    ("SSIM", 0.5773),
    ("FSM", 0.8661),
    ("FSIM", 0.2803),
    ("SVC", 0.70),
    ("LDA", 0.72),
    ("K-NN", 0.46),
    ("DT", 0.37),
    ("LR", 0.78),
    ("NB", 0.65),
    ("HOG", 0.85),
    ("LBP", 0.825),
    ("HOG & LBP", 0.825),
    ("Harris", 0.775),
    ("Surf", 0.55),
    ("PCA", 0.725),
    ("K-NN", 0.85),
)


@dataclass(frozen=True)
class ProbeOutcome:
    probe_id: str
    true_subject: str
    predicted_subject: str
    similarity: float
    correct: bool


@dataclass(frozen=True)
class EvalReport:
    n_probes: int
    rank1_accuracy: Optional[float]  # None when there are no probes
    thresholded_accuracy: Optional[float]
    threshold_used: float
    per_probe: Tuple[ProbeOutcome, ...]
    sweep: Tuple[Tuple[float, float], ...]
    reference_rows: Tuple[Tuple[str, float], ...] = REFERENCE_ROWS


@dataclass(frozen=True)
class CurveRow:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float


@dataclass(frozen=True)
class CurveLog:
    rows: Tuple[CurveRow, ...]


def split_pairs(
    subjects: Sequence[str], ratio: float, seed: int
) -> Tuple[Tuple[str, ...], Tuple[str, ...]]:
    """Seeded subject-level split; no subject straddles the two sides.

    Train side gets round(ratio * N) subjects, clamped so neither side
    is empty.  Splitting by subject (not by image) is what keeps the
    validation metric honest: the same face on both sides would leak.
    """
    ids = list(subjects)
    if len(set(ids)) != len(ids):
        raise ValueError("subject list contains duplicates")
    if len(ids) < 2:
        raise TooFewSubjects(f"need at least 2 subjects, got {len(ids)}")
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"ratio must lie in (0, 1), got {ratio}")
    order = np.random.default_rng(seed).permutation(len(ids))
    n_train = int(math.floor(ratio * len(ids) + 0.5))
    n_train = min(max(n_train, 1), len(ids) - 1)
    train = sorted(ids[i] for i in order[:n_train])
    val = sorted(ids[i] for i in order[n_train:])
    return tuple(train), tuple(val)


def _sweep(genuine: List[float], impostor: List[float]) -> Tuple[Tuple[float, float], ...]:
    """Verification accuracy at every decision boundary the scores allow:
    midpoints between adjacent distinct scores, plus the endpoints."""
    total = len(genuine) + len(impostor)
    if total == 0:
        return ()
    distinct = sorted(set(genuine) | set(impostor))
    candidates = [-1.0]
    candidates.extend((lo + hi) / 2.0 for lo, hi in zip(distinct, distinct[1:]))
    candidates.append(1.0)
    out = []
    for t in candidates:
        correct = sum(1 for s in genuine if s >= t) + sum(1 for s in impostor if s < t)
        out.append((t, correct / total))
    return tuple(out)


def evaluate(
    results: Sequence[MatchResult],
    truth: Mapping[str, str],
    threshold_used: float = DEFAULT_THRESHOLD,
) -> EvalReport:
    """Aggregate match results against ground truth."""
    outcomes = []
    genuine: List[float] = []
    impostor: List[float] = []
    for result in results:
        if result.probe_id not in truth:
            raise UnknownProbe(f"probe {result.probe_id!r} missing from truth mapping")
        true_subject = truth[result.probe_id]
        correct = result.best_subject == true_subject
        (genuine if correct else impostor).append(result.similarity)
        outcomes.append(
            ProbeOutcome(
                probe_id=result.probe_id,
                true_subject=true_subject,
                predicted_subject=result.best_subject,
                similarity=result.similarity,
                correct=correct,
            )
        )
    n = len(outcomes)
    if n == 0:
        return EvalReport(
            n_probes=0,
            rank1_accuracy=None,
            thresholded_accuracy=None,
            threshold_used=threshold_used,
            per_probe=(),
            sweep=(),
        )
    n_correct = sum(1 for o in outcomes if o.correct)
    n_thresholded = sum(
        1 for o, r in zip(outcomes, results) if o.correct and r.accepted
    )
    return EvalReport(
        n_probes=n,
        rank1_accuracy=n_correct / n,
        thresholded_accuracy=n_thresholded / n,
        threshold_used=threshold_used,
        per_probe=tuple(outcomes),
        sweep=_sweep(genuine, impostor),
    )


def load_truth(path: Union[str, Path]) -> Dict[str, str]:
    """Parse a truth CSV (header ``probe_id,subject``) into a mapping."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read truth file: {exc}") from exc
    reader = csv.reader(io.StringIO(text))
    lines = [row for row in reader if row]
    if not lines or lines[0] != ["probe_id", "subject"]:
        raise ParseError("truth file must start with header probe_id,subject")
    truth: Dict[str, str] = {}
    for lineno, fields in enumerate(lines[1:], start=2):
        if len(fields) != 2:
            raise ParseError(f"truth line {lineno}: expected 2 fields, got {len(fields)}")
        probe_id, subject = fields
        if probe_id in truth:
            raise ParseError(f"truth line {lineno}: duplicate probe_id {probe_id!r}")
        truth[probe_id] = subject
    return truth


# ---------------------------------------------------------------------------
# Curve logs

_CURVE_HEADER = ["epoch", "train_loss", "train_acc", "val_loss", "val_acc"]


def load_curve_log(path: Union[str, Path]) -> CurveLog:
    """Parse a per-epoch metrics CSV; epochs must run 1..N without gaps."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read curve log: {exc}") from exc
    reader = csv.reader(io.StringIO(text))
    rows = [row for row in reader if row]
    if not rows:
        raise ParseError("curve log is empty")
    if rows[0] != _CURVE_HEADER:
        raise ParseError(
            f"curve log header must be {','.join(_CURVE_HEADER)}, got {','.join(rows[0])}"
        )
    parsed = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != 5:
            raise ParseError(f"line {lineno}: expected 5 fields, got {len(row)}")
        try:
            parsed.append(
                CurveRow(
                    epoch=int(row[0]),
                    train_loss=float(row[1]),
                    train_acc=float(row[2]),
                    val_loss=float(row[3]),
                    val_acc=float(row[4]),
                )
            )
        except ValueError as exc:
            raise ParseError(f"line {lineno}: {exc}") from exc
    for i, row in enumerate(parsed, start=1):
        if row.epoch != i:
            raise NonConsecutiveEpochs(
                f"expected epoch {i} at position {i}, found {row.epoch}"
            )
    return CurveLog(rows=tuple(parsed))


def smoothed_losses(curve: CurveLog, window: int = 3) -> List[float]:
    """Centered moving average of train_loss (shrinking at the edges)."""
    losses = [row.train_loss for row in curve.rows]
    half = window // 2
    out = []
    for i in range(len(losses)):
        lo = max(0, i - half)
        hi = min(len(losses), i + half + 1)
        out.append(sum(losses[lo:hi]) / (hi - lo))
    return out


# ---------------------------------------------------------------------------
# Report files


def render_report(
    report: EvalReport,
    curve: Optional[CurveLog],
    path: Union[str, Path],
) -> None:
    """Write report.json and report.txt (and curves.csv when curve given)
    into the directory at ``path``, creating it if needed."""
    out_dir = Path(path)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create report directory {out_dir}: {exc}") from exc
    _write_text(out_dir / "report.json", json.dumps(_report_to_dict(report), indent=2))
    _write_text(out_dir / "report.txt", _format_text_table(report))
    if curve is not None:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(_CURVE_HEADER)
        for row in curve.rows:
            writer.writerow(
                [row.epoch, row.train_loss, row.train_acc, row.val_loss, row.val_acc]
            )
        _write_text(out_dir / "curves.csv", buf.getvalue())


def _write_text(path: Path, content: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    try:
        tmp.write_text(content, encoding="utf-8")
        tmp.replace(path)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def _report_to_dict(report: EvalReport) -> Dict:
    return {
        "n_probes": report.n_probes,
        "rank1_accuracy": report.rank1_accuracy,
        "thresholded_accuracy": report.thresholded_accuracy,
        "threshold_used": report.threshold_used,
        "per_probe": [asdict(o) for o in report.per_probe],
        "sweep": [[t, a] for t, a in report.sweep],
        "reference_rows": [[m, s] for m, s in report.reference_rows],
    }


def load_report(path: Union[str, Path]) -> EvalReport:
    """Parse a report.json back into an EvalReport (inverse of render)."""
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ParseError(f"cannot read report: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"report is not valid JSON: {exc}") from exc
    try:
        return EvalReport(
            n_probes=payload["n_probes"],
            rank1_accuracy=payload["rank1_accuracy"],
            thresholded_accuracy=payload["thresholded_accuracy"],
            threshold_used=payload["threshold_used"],
            per_probe=tuple(ProbeOutcome(**o) for o in payload["per_probe"]),
            sweep=tuple((t, a) for t, a in payload["sweep"]),
            reference_rows=tuple((m, s) for m, s in payload["reference_rows"]),
        )
    except (KeyError, TypeError) as exc:
        raise ParseError(f"report is missing fields: {exc}") from exc


def _format_text_table(report: EvalReport) -> str:
    def fmt(value: Optional[float]) -> str:
        return "n/a" if value is None else f"{value:.4f}"

    lines = [
        "matching evaluation",
        "===================",
        f"probes                {report.n_probes}",
        f"rank-1 accuracy       {fmt(report.rank1_accuracy)}",
        f"thresholded accuracy  {fmt(report.thresholded_accuracy)}"
        f"  (threshold {report.threshold_used:.4f})",
        "",
        "method comparison (reported scores)",
        "-----------------------------------",
    ]
    width = max(len(m) for m, _ in report.reference_rows)
    for method, score in report.reference_rows:
        marker = "  <- this pipeline's method" if method == "Cosine Similarity" else ""
        lines.append(f"{method:<{width}}  {score:.4f}{marker}")
    if report.rank1_accuracy is not None:
        lines.append("")
        lines.append(
            f"{'this run (rank-1)':<{width}}  {report.rank1_accuracy:.4f}"
        )
    return "\n".join(lines) + "\n"
