"""Sidecar entry point, honoring the gateway contract:

    postersidecar --manifest <path> --tasks detect,embed,ethnicity --out <dir>

Exit 0 means a complete bundle is in <out>; any failure exits nonzero with
a diagnostic on stderr and leaves no partial files.
"""

from __future__ import annotations

import argparse
import sys

from . import SidecarError, __version__
from .models import make_provider
from .serve import serve_batch


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="postersidecar", description=__doc__)
    parser.add_argument("--manifest", required=True, help="JSONL manifest of images")
    parser.add_argument("--tasks", required=True, help="comma-separated: detect,embed,ethnicity")
    parser.add_argument("--out", required=True, help="bundle output directory")
    parser.add_argument("--ethnicity-model", choices=["four", "seven"], default="four")
    parser.add_argument("--provider", choices=["builtin", "onnx"], default="builtin")
    parser.add_argument("--weights-dir", help="model weights location (onnx provider)")
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--version", action="version", version=f"postersidecar {__version__}")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    tasks = tuple(t.strip() for t in args.tasks.split(",") if t.strip())
    try:
        provider = make_provider(args.provider, args.ethnicity_model, args.weights_dir, args.device)
        serve_batch(args.manifest, tasks, args.out, provider)
    except SidecarError as exc:
        print(f"postersidecar: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # any crash still honors the no-partial-files contract
        print(f"postersidecar: internal error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
