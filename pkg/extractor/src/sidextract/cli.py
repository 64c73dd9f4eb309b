"""Extractor command line: `sidextract images ...` and `sidextract texts ...`."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .encoders import DEFAULT_ENCODER, make_encoder
from .jobs import (
    ExtractionJob,
    extract_antonym_poles,
    extract_images,
    extract_plain_terms,
    extract_prompt_pairs,
    load_split_map,
)


def cmd_images(args: argparse.Namespace) -> int:
    job = ExtractionJob(
        image_root=Path(args.root),
        folders=load_split_map(args.split_map),
        out_manifest=Path(args.out),
        encoder=args.encoder,
        variants=args.variants,
        seed=args.seed,
        dataset_name=args.name or "",
    )
    manifest = extract_images(job)
    print(f"wrote {manifest}")
    return 0


def cmd_texts(args: argparse.Namespace) -> int:
    payload = json.loads(Path(args.terms).read_text(encoding="utf-8"))
    encoder = make_encoder(args.encoder)
    out = Path(args.out)
    if args.kind == "auto":
        if "pairs" in payload:
            kind = "prompts"
        elif "entries" in payload:
            kind = "antonyms"
        else:
            kind = "plain"
    else:
        kind = args.kind
    if kind == "prompts":
        extract_prompt_pairs(payload["pairs"], out, encoder)
    elif kind == "antonyms":
        extract_antonym_poles(payload["entries"], out, encoder, template=args.template)
    else:
        extract_plain_terms(payload["terms"], out, encoder, template=args.template, name=args.name or "")
    print(f"wrote {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sidextract", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_img = sub.add_parser("images", help="encode image folders into dataset files")
    p_img.add_argument("--root", required=True, help="image root directory")
    p_img.add_argument("--split-map", required=True, help="JSON assigning (label, generator, split) per folder")
    p_img.add_argument("--out", required=True, help="output manifest path")
    p_img.add_argument("--encoder", default=DEFAULT_ENCODER, help="model id, or 'stub' for the test encoder")
    p_img.add_argument("--variants", type=int, default=1, help="augmented rows per train image")
    p_img.add_argument("--seed", type=int, default=123)
    p_img.add_argument("--name", help="dataset name (default: manifest stem)")
    p_img.set_defaults(func=cmd_images)

    p_txt = sub.add_parser("texts", help="embed vocabulary terms, antonym poles, or prompt pairs")
    p_txt.add_argument("--terms", required=True, help="JSON input file")
    p_txt.add_argument("--out", required=True, help="output tensor path")
    p_txt.add_argument("--kind", choices=("auto", "plain", "antonyms", "prompts"), default="auto")
    p_txt.add_argument("--template", default="{}", help="format template applied to each text")
    p_txt.add_argument("--encoder", default=DEFAULT_ENCODER)
    p_txt.add_argument("--name", help="vocabulary name")
    p_txt.set_defaults(func=cmd_texts)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
