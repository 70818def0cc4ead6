"""Command-line driver for the whole pipeline.

Subcommands: prepare-dataset, augment, extract, index, match,
calibrate, evaluate, serve.  Exit codes follow one contract everywhere:
0 success, 1 usage error, 2 data error (unreadable, malformed, or
contract-violating inputs), 3 internal error.  MUFM_LOG (error, warn,
info, debug) controls stderr verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import dataset as ds
from .embedding import Embedding, MaskStatus
from .errors import CorruptStream, MufmError, ParseError, UnsupportedFormat
from .evaluation import evaluate, load_curve_log, load_truth, render_report
from .extractor import (
    Extractor,
    atomic_write_bytes,
    load_precomputed,
    save_embeddings,
)
from .figures import render_curves_figure, render_match_montage, render_sweep_figure
from .imaging import (
    AUGMENT_FLIP_PROBABILITY,
    AUGMENT_ROTATE_RANGE,
    AUGMENT_SHIFT_FRACTION,
    AUGMENT_ZOOM_RANGE,
    FlipHorizontal,
    ImageRecord,
    PreprocessConfig,
    Rotate,
    Shift,
    Zoom,
    augment,
    decode_image,
    encode_png,
    ensure_rgb,
    preprocess,
)
from .knn_index import GalleryIndex, Metric
from .matcher import (
    DEFAULT_SHORTLIST_K,
    DEFAULT_THRESHOLD,
    MatchConfig,
    calibrate_threshold,
    match_all,
    results_from_jsonl,
    results_to_jsonl,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3

DEFAULT_SEED = 42

LOG = logging.getLogger("mufm")

_LOG_LEVELS = {
    "error": logging.ERROR,
    "warn": logging.WARNING,
    "info": logging.INFO,
    "debug": logging.DEBUG,
}


class UsageError(Exception):
    """Bad flags or flag values; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    # argparse's default error() exits 2; the exit-code contract
    # reserves 2 for data errors, so usage problems raise instead.
    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(message)


def _configure_logging() -> None:
    name = os.environ.get("MUFM_LOG", "warn").strip().lower()
    level = _LOG_LEVELS.get(name)
    if level is None:
        level = logging.WARNING
        if name:
            print(
                f"warning: MUFM_LOG={name!r} is not one of "
                f"{sorted(_LOG_LEVELS)}; using warn",
                file=sys.stderr,
            )
    logging.basicConfig(
        level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s"
    )
    LOG.setLevel(level)


def _check_threshold(value: float) -> float:
    if not -1.0 <= value <= 1.0:
        raise UsageError(f"--threshold must lie in [-1, 1], got {value}")
    return value


def _check_k(value: int) -> int:
    if value < 1:
        raise UsageError(f"--k must be at least 1, got {value}")
    return value


def _read_bytes(path: Path) -> bytes:
    try:
        return path.read_bytes()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc


def _read_text(path: Path) -> str:
    try:
        return path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# prepare-dataset


def cmd_prepare_dataset(args: argparse.Namespace) -> int:
    src = Path(args.src)
    dst = Path(args.dst)
    if not src.is_dir():
        print(f"error: source directory {src} does not exist", file=sys.stderr)
        return EXIT_DATA
    rows: List[ds.ManifestRow] = []
    attempted = 0
    failed = 0
    for dirname, status in sorted(ds.STATUS_DIRS.items()):
        folder = src / dirname
        if not folder.is_dir():
            continue
        prefix = "m" if status is MaskStatus.MASKED else "u"
        counters: dict = {}
        for source in sorted(folder.iterdir()):
            if not source.is_file():
                continue
            attempted += 1
            try:
                pixels = decode_image(_read_bytes(source))
            except (UnsupportedFormat, CorruptStream, ParseError) as exc:
                # Partial-failure policy: report, keep going.
                print(f"skipping {source}: {exc}", file=sys.stderr)
                failed += 1
                continue
            subject = ds.subject_of(source.stem)
            seq = counters.get(subject, 0)
            counters[subject] = seq + 1
            image_id = f"{subject}__{prefix}{seq:03d}"
            target = dst / dirname / f"{image_id}.png"
            target.parent.mkdir(parents=True, exist_ok=True)
            atomic_write_bytes(target, encode_png(pixels))
            rows.append(ds.ManifestRow(image_id, subject, status, str(source)))
            LOG.info("prepared %s -> %s", source, target)
    if attempted == 0:
        print(f"error: no images under {src}", file=sys.stderr)
        return EXIT_DATA
    if not rows:
        print(f"error: all {attempted} images failed to convert", file=sys.stderr)
        return EXIT_DATA
    dst.mkdir(parents=True, exist_ok=True)
    ds.write_manifest(rows, dst / ds.MANIFEST_NAME)
    print(f"prepared {len(rows)} images ({failed} skipped) into {dst}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# augment


def _sample_transforms(rng: np.random.Generator) -> List:
    transforms: List = []
    if rng.random() < AUGMENT_FLIP_PROBABILITY:
        transforms.append(FlipHorizontal())
    transforms.append(Rotate(float(rng.uniform(*AUGMENT_ROTATE_RANGE))))
    transforms.append(Zoom(float(rng.uniform(*AUGMENT_ZOOM_RANGE))))
    return transforms


def cmd_augment(args: argparse.Namespace) -> int:
    if args.per_image < 1:
        raise UsageError(f"--per-image must be at least 1, got {args.per_image}")
    root = Path(args.data)
    out = Path(args.out)
    rows = ds.scan_prepared(root)
    rng = np.random.default_rng(args.seed)
    out_rows: List[ds.ManifestRow] = []
    dir_of = {status: dirname for dirname, status in ds.STATUS_DIRS.items()}
    for row in rows:
        source = ds.image_path_for(root, row)
        pixels = decode_image(_read_bytes(source))
        dirname = dir_of.get(row.mask_status, ds.UNMASKED_DIR)
        target_dir = out / dirname
        target_dir.mkdir(parents=True, exist_ok=True)
        atomic_write_bytes(target_dir / f"{row.id}.png", encode_png(pixels))
        out_rows.append(
            ds.ManifestRow(row.id, row.subject, row.mask_status, str(source))
        )
        side = min(pixels.shape[0], pixels.shape[1])
        max_shift = AUGMENT_SHIFT_FRACTION * side
        for copy_index in range(args.per_image):
            transformed = pixels
            for transform in _sample_transforms(rng):
                transformed = augment(transformed, transform)
            transformed = augment(
                transformed,
                Shift(
                    dx=float(rng.uniform(-max_shift, max_shift)),
                    dy=float(rng.uniform(-max_shift, max_shift)),
                ),
            )
            new_id = f"{row.id}-a{copy_index:02d}"
            atomic_write_bytes(target_dir / f"{new_id}.png", encode_png(transformed))
            out_rows.append(
                ds.ManifestRow(new_id, row.subject, row.mask_status, str(source))
            )
    out.mkdir(parents=True, exist_ok=True)
    ds.write_manifest(out_rows, out / ds.MANIFEST_NAME)
    print(
        f"augmented {len(rows)} images x{args.per_image} -> "
        f"{len(out_rows)} files in {out}"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# extract


def cmd_extract(args: argparse.Namespace) -> int:
    if (args.model is None) == (args.precomputed is None):
        raise UsageError("provide exactly one of --model or --precomputed")
    if args.precomputed is not None:
        embeddings = load_precomputed(args.precomputed)
        save_embeddings(embeddings, args.out, fmt=args.format)
        print(f"wrote {len(embeddings)} embeddings to {args.out}")
        return EXIT_OK
    if args.data is None:
        raise UsageError("--data is required when extracting with --model")
    root = Path(args.data)
    rows = ds.scan_prepared(root)
    extractor = Extractor.for_model(args.model)
    config = PreprocessConfig()
    embeddings = []
    for row in rows:
        pixels = ensure_rgb(decode_image(_read_bytes(ds.image_path_for(root, row))))
        record = ImageRecord(
            id=row.id, subject=row.subject, mask_status=row.mask_status, pixels=pixels
        )
        tensor = preprocess(record, config)
        embeddings.append(
            extractor.extract(tensor, row.id, row.subject, row.mask_status)
        )
        LOG.debug("extracted %s", row.id)
    save_embeddings(embeddings, args.out, fmt=args.format)
    print(f"wrote {len(embeddings)} embeddings to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# index


def cmd_index(args: argparse.Namespace) -> int:
    embeddings = load_precomputed(args.embeddings)
    try:
        index = GalleryIndex(embeddings, metric=Metric(args.metric))
    except ValueError as exc:  # unlabeled entries; duplicates caught on load
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    subjects = sorted(set(index.subjects))
    print(f"entries    {len(index)}")
    print(f"dimension  {index.dimension}")
    print(f"subjects   {len(subjects)}")
    print(f"metric     {index.metric.value}")
    if args.out:
        save_embeddings(embeddings, args.out)
        print(f"rewrote canonical embedding file to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# match


def _check_match_roles(
    gallery: Sequence[Embedding], probes: Sequence[Embedding]
) -> None:
    for emb in gallery:
        if emb.mask_status is MaskStatus.MASKED:
            raise ParseError(
                f"gallery entry {emb.source_id!r} is masked; pass --no-mask-check "
                "to match against a masked gallery anyway"
            )
    for emb in probes:
        if emb.mask_status is MaskStatus.UNMASKED:
            raise ParseError(
                f"probe {emb.source_id!r} is unmasked; pass --no-mask-check "
                "to match unmasked probes anyway"
            )


def cmd_match(args: argparse.Namespace) -> int:
    _check_threshold(args.threshold)
    _check_k(args.k)
    if args.render and not args.images:
        raise UsageError("--render needs --images pointing at a prepared dataset")
    gallery = load_precomputed(args.gallery)
    probes = load_precomputed(args.probes)
    if not args.no_mask_check:
        _check_match_roles(gallery, probes)
    index = GalleryIndex(gallery)
    cfg = MatchConfig(
        shortlist_k=args.k,
        threshold=args.threshold,
        require_unmasked_gallery=not args.no_mask_check,
    )
    results = match_all(probes, index, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    atomic_write_bytes(out / "matches.jsonl", results_to_jsonl(results).encode("utf-8"))
    if args.render:
        images_root = Path(args.images)
        by_id = {row.id: row for row in ds.scan_prepared(images_root)}
        for result in results:
            pair = []
            for image_id in (result.probe_id, result.best_id):
                row = by_id.get(image_id)
                if row is None:
                    raise ParseError(
                        f"no image with id {image_id!r} under {images_root}"
                    )
                pixels = decode_image(_read_bytes(ds.image_path_for(images_root, row)))
                pair.append(ensure_rgb(pixels).astype(np.float64) / 255.0)
            render_match_montage(
                pair[0],
                pair[1],
                out / f"{result.probe_id}__{result.best_id}.png",
                probe_id=result.probe_id,
                best_id=result.best_id,
                similarity=result.similarity,
                accepted=result.accepted,
                best_subject=result.best_subject,
            )
    accepted = sum(1 for r in results if r.accepted)
    print(f"matched {len(results)} probes, {accepted} accepted -> {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# calibrate


def cmd_calibrate(args: argparse.Namespace) -> int:
    results = results_from_jsonl(_read_text(Path(args.matches)))
    truth = load_truth(args.truth)
    genuine: List[float] = []
    impostor: List[float] = []
    for result in results:
        if result.probe_id not in truth:
            raise ParseError(
                f"probe {result.probe_id!r} missing from truth file"
            )
        correct = result.best_subject == truth[result.probe_id]
        (genuine if correct else impostor).append(result.similarity)
    threshold, accuracy = calibrate_threshold(genuine, impostor)
    payload = {
        "threshold": threshold,
        "accuracy": accuracy,
        "n_genuine": len(genuine),
        "n_impostor": len(impostor),
    }
    text = json.dumps(payload, indent=2)
    print(text)
    if args.out:
        atomic_write_bytes(Path(args.out), (text + "\n").encode("utf-8"))
    return EXIT_OK


# ---------------------------------------------------------------------------
# evaluate


def cmd_evaluate(args: argparse.Namespace) -> int:
    _check_threshold(args.threshold)
    results = results_from_jsonl(_read_text(Path(args.matches)))
    truth = load_truth(args.truth)
    curve = load_curve_log(args.curves) if args.curves else None
    report = evaluate(results, truth, threshold_used=args.threshold)
    out = Path(args.out)
    render_report(report, curve, out)
    render_sweep_figure(report, out / "sweep.png")
    if curve is not None:
        render_curves_figure(curve, out / "curves.png")

    def fmt(value: Optional[float]) -> str:
        return "n/a" if value is None else f"{value:.4f}"

    print(
        f"evaluated {report.n_probes} probes: rank-1 {fmt(report.rank1_accuracy)}, "
        f"thresholded {fmt(report.thresholded_accuracy)} -> {out}"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# serve


def cmd_serve(args: argparse.Namespace) -> int:
    _check_threshold(args.threshold)
    _check_k(args.k)
    from .service import serve

    serve(
        args.store,
        host=args.host,
        port=args.port,
        model_path=args.model,
        threshold=args.threshold,
        k=args.k,
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser assembly


def build_parser() -> _Parser:
    parser = _Parser(
        prog="mufm",
        description="Masked/unmasked face matching: dataset preparation, "
        "embedding extraction, matching, calibration, evaluation, serving.",
    )
    sub = parser.add_subparsers(dest="subcommand", metavar="SUBCOMMAND")

    p = sub.add_parser(
        "prepare-dataset",
        help="convert a raw two-folder image tree into the canonical PNG layout",
        description="Reads <src>/with_mask and <src>/without_mask, converts "
        "every readable image to PNG under <dst>, and writes a manifest CSV. "
        "Unreadable files are reported and skipped; the run only fails when "
        "nothing converts.",
    )
    p.add_argument("--src", required=True, help="raw dataset root")
    p.add_argument("--dst", required=True, help="prepared dataset root to create")
    p.set_defaults(func=cmd_prepare_dataset)

    p = sub.add_parser(
        "augment",
        help="expand a prepared dataset with randomly transformed copies",
        description="Copies every image and adds --per-image randomly "
        "flipped/rotated/zoomed/shifted variants with '-aNN' id suffixes. "
        "Deterministic for a fixed --seed.",
    )
    p.add_argument("--data", required=True, help="prepared dataset root")
    p.add_argument("--out", required=True, help="augmented dataset root to create")
    p.add_argument("--per-image", type=int, default=2, help="copies per image (default 2)")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED, help="RNG seed (default 42)")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser(
        "extract",
        help="turn a prepared dataset into an embedding file",
        description="Runs each image through the model and writes unit-norm "
        "embeddings labeled from the manifest; or re-serializes an existing "
        "embedding file with --precomputed.",
    )
    p.add_argument("--data", help="prepared dataset root (required with --model)")
    p.add_argument("--model", help="model file for the embedding backbone")
    p.add_argument("--precomputed", help="existing embedding file to pass through")
    p.add_argument("--out", required=True, help="embedding file to write")
    p.add_argument(
        "--format",
        choices=["binary", "jsonl"],
        default="binary",
        help="output encoding (default binary)",
    )
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser(
        "index",
        help="validate an embedding file and print gallery statistics",
        description="Builds the in-memory index (checking labels, norms, and "
        "duplicate ids) and reports entry count, dimension, and subjects. "
        "With --out, rewrites the file in canonical binary form.",
    )
    p.add_argument("--embeddings", required=True, help="embedding file to index")
    p.add_argument("--out", help="optional canonical re-serialization target")
    p.add_argument(
        "--metric",
        choices=[m.value for m in Metric],
        default=Metric.COSINE_DISTANCE.value,
        help="neighbor ordering metric (default cosine)",
    )
    p.set_defaults(func=cmd_index)

    p = sub.add_parser(
        "match",
        help="match probe embeddings against a gallery embedding file",
        description="Writes matches.jsonl (one result per probe) into --out; "
        "--render adds side-by-side montage PNGs named "
        "<probe_id>__<best_id>.png.",
    )
    p.add_argument("--gallery", required=True, help="gallery embedding file (unmasked)")
    p.add_argument("--probes", required=True, help="probe embedding file (masked)")
    p.add_argument(
        "--k", type=int, default=DEFAULT_SHORTLIST_K,
        help=f"shortlist size (default {DEFAULT_SHORTLIST_K})",
    )
    p.add_argument(
        "--threshold", type=float, default=DEFAULT_THRESHOLD,
        help=f"accept threshold in [-1, 1] (default {DEFAULT_THRESHOLD})",
    )
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument(
        "--no-mask-check", action="store_true",
        help="skip the unmasked-gallery / masked-probe role check",
    )
    p.add_argument(
        "--render", action="store_true",
        help="also render probe/best montage PNGs (needs --images)",
    )
    p.add_argument("--images", help="prepared dataset root for montage rendering")
    p.set_defaults(func=cmd_match)

    p = sub.add_parser(
        "calibrate",
        help="pick the accuracy-maximizing accept threshold from matches + truth",
        description="Splits match similarities into genuine (correct subject) "
        "and impostor scores and prints the threshold maximizing verification "
        "accuracy as JSON.",
    )
    p.add_argument("--matches", required=True, help="matches.jsonl from 'match'")
    p.add_argument("--truth", required=True, help="truth CSV (probe_id,subject)")
    p.add_argument("--out", help="optional JSON output file")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser(
        "evaluate",
        help="score matches against truth and write the report directory",
        description="Writes report.json, report.txt, curves.csv (with "
        "--curves), and figure PNGs into --out.",
    )
    p.add_argument("--matches", required=True, help="matches.jsonl from 'match'")
    p.add_argument("--truth", required=True, help="truth CSV (probe_id,subject)")
    p.add_argument("--curves", help="optional per-epoch training metrics CSV")
    p.add_argument(
        "--threshold", type=float, default=DEFAULT_THRESHOLD,
        help="threshold the matches were produced with "
        f"(default {DEFAULT_THRESHOLD})",
    )
    p.add_argument("--out", required=True, help="report directory")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser(
        "serve",
        help="run the HTTP verification service",
        description="Serves enrollment and matching over HTTP against a "
        "persistent gallery file.",
    )
    p.add_argument("--store", required=True, help="gallery embedding file (created if missing)")
    p.add_argument("--host", default="127.0.0.1", help="bind address (default 127.0.0.1)")
    p.add_argument("--port", type=int, default=8000, help="bind port (default 8000)")
    p.add_argument("--model", help="model file enabling image bodies")
    p.add_argument(
        "--threshold", type=float, default=DEFAULT_THRESHOLD,
        help=f"default accept threshold (default {DEFAULT_THRESHOLD})",
    )
    p.add_argument(
        "--k", type=int, default=DEFAULT_SHORTLIST_K,
        help=f"default shortlist size (default {DEFAULT_SHORTLIST_K})",
    )
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    _configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "func", None) is None:
            raise UsageError("a subcommand is required (see --help)")
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except MufmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except KeyboardInterrupt:
        return EXIT_INTERNAL
    except Exception as exc:  # anything unforeseen is an internal error
        if LOG.isEnabledFor(logging.DEBUG):
            LOG.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


def entry() -> None:
    sys.exit(main())
