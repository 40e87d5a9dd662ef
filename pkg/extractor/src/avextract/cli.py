"""Extraction-client CLI: `avx-extract build` turns a media manifest into
a feature archive; `avx-extract prompts` inspects the template ensembles.
Exit codes: 0 success, 1 usage error, 2 media/manifest error.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .encoders import build_encoders
from .errors import ExtractorError
from .extract import ExtractionSpec, build_archive
from .prompts import get_ensemble


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="avx-extract", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("build", help="extract features into an archive")
    p.add_argument("--manifest", required=True, help="media manifest JSON")
    p.add_argument("--out", required=True, help="archive directory to write")
    p.add_argument("--clip-model", help="override the manifest's CLIP id")
    p.add_argument("--clap-model", help="override the manifest's CLAP id")
    p.add_argument("--prompts",
                   choices=("ucf", "activitynet", "vggsound"),
                   help="override the manifest's prompt set")

    p = sub.add_parser("prompts", help="show a template ensemble")
    p.add_argument("--dataset", required=True,
                   choices=("ucf", "activitynet", "vggsound"))
    p.add_argument("--encoder", required=True, choices=("clip", "clap"))
    p.add_argument("--list", action="store_true", help="print the templates")
    return parser


def run_cli(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, stream=sys.stderr,
                        format="%(name)s: %(message)s")
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        return 1
    try:
        if args.command == "prompts":
            ensemble = get_ensemble(args.dataset, args.encoder)
            print(f"{args.dataset}/{args.encoder}: "
                  f"{len(ensemble.templates)} templates")
            if args.list:
                for t in ensemble.templates:
                    print(f"  {t}")
            return 0
        spec = ExtractionSpec.from_manifest(args.manifest)
        if args.clip_model:
            spec.clip_model = args.clip_model
        if args.clap_model:
            spec.clap_model = args.clap_model
        if args.prompts:
            spec.prompt_set = args.prompts
        encoders = build_encoders(spec.clip_model, spec.clap_model)
        out = build_archive(spec, args.out, encoders)
        print(f"wrote archive to {out} "
              f"(clip={spec.clip_model}, clap={spec.clap_model}, "
              f"prompts={spec.prompt_set})")
        return 0
    except ExtractorError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
