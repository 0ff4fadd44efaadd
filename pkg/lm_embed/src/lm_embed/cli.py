import argparse
import sys

from .exporter import ExportError, ExportJob, export


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lm-embed",
        description="Embed log templates with a pretrained language model "
        "and write them in the shared vector file format.",
    )
    parser.add_argument("--templates", required=True, help="template TSV path")
    parser.add_argument("--out", required=True, help="output vector file path")
    parser.add_argument("--model", required=True, help="model id or local model directory")
    parser.add_argument("--pool", choices=("mean", "cls"), default="mean")
    parser.add_argument(
        "--no-normalize", action="store_true",
        help="write raw pooled states instead of unit L2 rows",
    )
    parser.add_argument("--batch-size", type=int, default=32)
    parser.add_argument("--device", default="cpu")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        job = ExportJob(
            templates_path=args.templates,
            out_path=args.out,
            model_id=args.model,
            pooling=args.pool,
            normalize=not args.no_normalize,
            batch_size=args.batch_size,
            device=args.device,
        )
        count = export(job)
    except ExportError as exc:
        print(f"lm-embed: {exc}", file=sys.stderr)
        return 1
    print(f"lm-embed: wrote {count} vectors to {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
