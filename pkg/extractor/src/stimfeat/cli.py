"""Command-line entry point: ``extract --manifest m.json --model ID ...``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import List, Optional

from .backends import ToyBackend, TransformersBackend
from .errors import ExtractionError
from .extract import extract_features


def _parse_layers(text: str) -> List[int]:
    if text == "all":
        return []
    try:
        return [int(part) for part in text.split(",") if part]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(
            f"layers must be 'all' or comma-separated integers, got {text!r}"
        ) from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="extract",
        description="Extract pooled model representations for every "
        "stimulus in a dataset manifest.",
    )
    parser.add_argument("--manifest", type=Path, required=True,
                        help="dataset manifest JSON")
    parser.add_argument("--model", required=True,
                        help="model id; ids starting with 'toy' use the "
                        "deterministic stand-in backend")
    parser.add_argument("--layers", type=_parse_layers, default=[],
                        help="'all' or comma-separated hidden-state indices "
                        "(default: all)")
    parser.add_argument("--poolings", default="mean,last",
                        help="comma-separated pooling names (default: mean,last)")
    parser.add_argument("--out", type=Path, required=True,
                        help="output directory for feature files and index")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    poolings = [p for p in args.poolings.split(",") if p]
    if not poolings:
        print("error: no poolings requested", file=sys.stderr)
        return 2
    try:
        if args.model.startswith("toy"):
            backend = ToyBackend(args.model)
        else:
            backend = TransformersBackend(
                args.model, image_root=args.manifest.parent
            )
        index = extract_features(
            args.manifest, backend, args.out,
            layers=args.layers, poolings=poolings,
        )
    except ExtractionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(index)
    return 0


if __name__ == "__main__":
    sys.exit(main())
