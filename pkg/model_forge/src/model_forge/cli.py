"""Command line entry: one training run from prepared data to artifacts.

    model-forge --data prepared/ --out run/ --epochs 20 --seed 42

writes run/backbone.onnx (the embedding backbone for the matching
engine) and run/curves.csv (per-epoch metrics in the engine's curve-log
format). Exit codes: 0 success, 1 usage, 2 data/environment, 3 internal.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

from .dataset import class_counts, scan
from .errors import ForgeError, WeightsUnavailable
from .export import export_backbone
from .model import FREEZE_BASE, TrainSpec, build_transfer_model, trainable_parameter_count
from .training import train

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # raise instead of exiting
        raise UsageError(message)


def _parse_head(text: str) -> Tuple[int, ...]:
    try:
        widths = tuple(int(part) for part in text.split(","))
    except ValueError:
        raise UsageError(f"--head wants comma-separated integers, got {text!r}")
    if not widths or any(w < 1 for w in widths):
        raise UsageError(f"--head widths must be positive, got {text!r}")
    return widths


def build_parser() -> _Parser:
    parser = _Parser(
        prog="model-forge",
        description=(
            "Train a masked/unmasked classification head on a frozen "
            "VGG-16 base and export the embedding backbone."
        ),
    )
    parser.add_argument("--data", required=True, help="prepared dataset root")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--epochs", type=int, default=20, help="training epochs (default 20)")
    parser.add_argument("--seed", type=int, default=42, help="RNG seed (default 42)")
    parser.add_argument(
        "--head", default="256,2", help="dense head widths, comma separated (default 256,2)"
    )
    parser.add_argument(
        "--random-init",
        action="store_true",
        help="skip pretrained weights; train from seeded random initialization",
    )
    parser.add_argument(
        "--unfreeze-from",
        type=int,
        default=None,
        metavar="N",
        help="fine-tune base modules from index N up (default: whole base frozen)",
    )
    return parser


def run(args: argparse.Namespace) -> int:
    data_dir = Path(args.data)
    if not data_dir.is_dir():
        raise ForgeError(f"dataset root {data_dir} is not a directory")
    if args.epochs < 1:
        raise UsageError(f"--epochs must be >= 1, got {args.epochs}")
    if args.unfreeze_from is not None and args.unfreeze_from < 0:
        raise UsageError(f"--unfreeze-from must be >= 0, got {args.unfreeze_from}")

    spec = TrainSpec(
        epochs=args.epochs,
        frozen_through=FREEZE_BASE if args.unfreeze_from is None else args.unfreeze_from,
        head=_parse_head(args.head),
        seed=args.seed,
    )
    items = scan(data_dir)  # fail before building the model on bad data
    counts = class_counts(items)

    model = build_transfer_model(spec, pretrained=not args.random_init)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = train(model, data_dir, spec, curve_path=out_dir / "curves.csv")
    model_path = export_backbone(model, out_dir / "backbone.onnx")

    last = rows[-1]
    print(
        f"trained {len(rows)} epochs on {len(items)} images "
        f"({counts['masked']} masked / {counts['unmasked']} unmasked), "
        f"{trainable_parameter_count(model)} trainable parameters"
    )
    print(
        f"final train_loss {last.train_loss:.4f} train_acc {last.train_acc:.4f} "
        f"val_loss {last.val_loss:.4f} val_acc {last.val_acc:.4f}"
    )
    print(f"wrote {model_path} and {out_dir / 'curves.csv'}")
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(list(argv) if argv is not None else None)
        return run(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # argparse --help
        code = exc.code if isinstance(exc.code, int) else EXIT_OK
        return code
    except WeightsUnavailable as exc:
        print(f"error: {exc}", file=sys.stderr)
        print("hint: pass --random-init to train without pretrained weights", file=sys.stderr)
        return EXIT_DATA
    except ForgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except KeyboardInterrupt:
        return EXIT_INTERNAL
    except Exception as exc:  # pragma: no cover - genuine bugs
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


def entry() -> None:
    sys.exit(main())
