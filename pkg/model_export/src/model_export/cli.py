"""Command-line entry: export fixture or real models, verify manifests."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .exporters import (
    BACKBONE_NAMES,
    DETECTOR_SIZES,
    export_backbone,
    export_detector,
    export_recognizer,
)
from .manifest import ExportError, load_verified


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="resume-ie-export",
        description="Export models to the TorchScript interchange format",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("backbone", help="export a frozen language-model backbone")
    p.add_argument("name", choices=BACKBONE_NAMES)
    p.add_argument("--out-dir", type=Path, default=Path("."))
    p.add_argument("--real", action="store_true", help="convert the cached checkpoint")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("detector", help="export a text-group detector")
    p.add_argument("size", choices=DETECTOR_SIZES)
    p.add_argument("--out-dir", type=Path, default=Path("."))
    p.add_argument("--real", action="store_true")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("recognizer", help="export the text recognizer")
    p.add_argument("--out-dir", type=Path, default=Path("."))
    p.add_argument("--real", action="store_true")
    p.add_argument("--text", default="skills", help="fixture decode target")

    p = sub.add_parser("verify", help="check a manifest against its model file")
    p.add_argument("manifest", type=Path)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "backbone":
            manifest = export_backbone(
                args.name, args.out_dir, fixture=not args.real, seed=args.seed
            )
        elif args.command == "detector":
            manifest = export_detector(
                args.size, args.out_dir, fixture=not args.real, seed=args.seed
            )
        elif args.command == "recognizer":
            manifest = export_recognizer(args.out_dir, fixture=not args.real, text=args.text)
        else:
            manifest, model_path = load_verified(args.manifest)
            print(f"ok: {model_path} matches {manifest.sha256[:12]}…")
            return 0
    except ExportError as e:
        sys.stderr.write(f"error: {e}\n")
        return 1
    print(json.dumps(manifest.as_dict(), indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
