"""Command line entry points for the alignment pipeline."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .dataset import validate_manifest
from .errors import ConfigError
from .pipeline import (
    PipelineConfig,
    StageFailure,
    _STAGES,
    load_config,
    run_all,
    run_synth,
    synth_config_from_dict,
)

log = logging.getLogger("align")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STAGE = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="align",
        description="Semantic consistency, ROI, encoding and RSA pipeline.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="generate a synthetic dataset")
    group = synth.add_mutually_exclusive_group(required=True)
    group.add_argument("--config", help="pipeline config JSON with a synth block")
    group.add_argument("--preset", choices=("default", "null"), help="built-in dataset preset")
    synth.add_argument("--seed", type=int, default=0, help="generator seed (with --preset)")
    synth.add_argument("--out", help="data directory (with --preset)")

    val = sub.add_parser("validate", help="check a dataset manifest")
    val.add_argument("--manifest", required=True)
    val.add_argument(
        "--skip-tensors", action="store_true", help="structural checks only, do not open tensors"
    )

    for name in ("consistency", "rois", "encode", "rsa", "ceiling", "report"):
        stage = sub.add_parser(name, help=f"run the {name} stage")
        stage.add_argument("--config", required=True, help="pipeline config JSON")

    run = sub.add_parser("run", help="run all stages in order")
    run.add_argument("--config", required=True, help="pipeline config JSON")
    return parser


def _cmd_synth(args) -> int:
    if args.config:
        cfg = load_config(args.config)
        if cfg.synth is None:
            raise ConfigError("config has no synth block")
        run_synth(cfg)
        log.info("synthetic dataset written to %s", cfg.data_dir)
        return EXIT_OK
    if not args.out:
        raise ConfigError("--preset needs --out")
    synth_cfg = synth_config_from_dict({"preset": args.preset, "seed": args.seed})
    cfg = PipelineConfig(out_dir=str(Path(args.out) / "run"), data_dir=args.out, synth=synth_cfg)
    run_synth(cfg)
    log.info("synthetic dataset written to %s", args.out)
    return EXIT_OK


def _cmd_validate(args) -> int:
    report = validate_manifest(args.manifest, check_tensors=not args.skip_tensors)
    for message in report.violations:
        print(message)
    if report.ok:
        print("manifest ok")
        return EXIT_OK
    print(f"{len(report.violations)} violation(s)")
    return EXIT_STAGE


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO, format="%(message)s"
    )
    try:
        if args.command == "synth":
            return _cmd_synth(args)
        if args.command == "validate":
            return _cmd_validate(args)
        cfg = load_config(args.config)
        if args.command == "run":
            for name in run_all(cfg):
                log.info("stage %s: done", name)
            return EXIT_OK
        _STAGES[args.command](cfg)
        log.info("stage %s: done", args.command)
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (StageFailure, OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
