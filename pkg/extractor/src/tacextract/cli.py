"""Extractor CLI: extract-images, extract-nouns, dump-nouns."""

from __future__ import annotations

import argparse
import sys

from .errors import ExtractError


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="tac-extract",
        description="Dump frozen vision-language embeddings in the engine's "
                    "TACE format.")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("extract-images",
                        help="embed an image folder (or cifar10) with labels")
    sp.add_argument("--dataset", required=True,
                    help="class-per-subdirectory folder, or 'cifar10'")
    sp.add_argument("--out-dir", required=True)
    sp.add_argument("--split", default="test")
    sp.add_argument("--backbone", default="clip-vit-b32",
                    help="'clip-vit-b32' or 'hash' (offline stand-in)")
    sp.add_argument("--prompt", default="A photo of [CLASS]")
    sp.add_argument("--batch-size", type=int, default=64)
    sp.add_argument("--device", default=None)
    sp.add_argument("--data-root", default=None,
                    help="download/cache directory for named datasets")

    sp = sub.add_parser("extract-nouns",
                        help="embed a noun list with a prompt template")
    sp.add_argument("--nouns", required=True, help="text file, one noun per line")
    sp.add_argument("--out-dir", required=True)
    sp.add_argument("--stem", default="nouns")
    sp.add_argument("--backbone", default="clip-vit-b32")
    sp.add_argument("--prompt", default="A photo of [CLASS]")
    sp.add_argument("--device", default=None)

    sp = sub.add_parser("dump-nouns", help="export the WordNet noun list")
    sp.add_argument("--out", required=True)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "extract-images":
            from .extract import ExtractionJob, extract_images
            job = ExtractionJob(dataset=args.dataset, out_dir=args.out_dir,
                                split=args.split, backbone=args.backbone,
                                prompt=args.prompt, batch_size=args.batch_size,
                                device=args.device)
            paths = extract_images(job, data_root=args.data_root)
            print("\n".join(f"{k}: {v}" for k, v in sorted(paths.items())))
        elif args.command == "extract-nouns":
            from .backbones import get_backbone
            from .extract import extract_nouns
            with open(args.nouns, encoding="utf-8") as f:
                nouns = [line.strip() for line in f if line.strip()]
            backbone = get_backbone(args.backbone, device=args.device)
            paths = extract_nouns(nouns, args.prompt, backbone, args.out_dir,
                                  stem=args.stem)
            print("\n".join(f"{k}: {v}" for k, v in sorted(paths.items())))
        elif args.command == "dump-nouns":
            from .extract import dump_wordnet_nouns
            count = dump_wordnet_nouns(args.out)
            print(f"{count} nouns -> {args.out}")
        return 0
    except ExtractError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
