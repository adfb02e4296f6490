"""Command-line interface.

Subcommands: synth, pretrain, train-stage1, train-stage2, eval, sample.
All commands write only to their declared output paths.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import load_config
from .data import generate_synthetic, load_manifest, save_manifest, split_dataset
from .train import evaluate, pretrain, sample_diverse, train_stage_one, train_stage_two


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="handgen",
        description="Two-stage prediction of diverse 3D hand gestures from body dynamics",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--frames", type=int, default=64)
    p.add_argument("--out", required=True)
    p.add_argument("--ratios", type=float, nargs=3, default=(0.7, 0.1, 0.2),
                   metavar=("TRAIN", "VAL", "TEST"))

    p = sub.add_parser("pretrain", help="pretrain the frozen hand autoencoders")
    p.add_argument("--config", default=None)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train-stage1", help="train the initial hand prediction model")
    p.add_argument("--config", default=None)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--pretrained", default=None, help="autoencoder checkpoint (optional)")

    p = sub.add_parser("train-stage2", help="train the diversification sampler")
    p.add_argument("--config", default=None)
    p.add_argument("--data", required=True)
    p.add_argument("--stage1", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset split")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--ckpt2", default=None, help="stage-two checkpoint for diversity")
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.add_argument("--report", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k", type=int, default=10, help="samples per input for diversity")

    p = sub.add_parser("sample", help="write k diversified hand sequences for one body input")
    p.add_argument("--ckpt1", required=True)
    p.add_argument("--ckpt2", required=True)
    p.add_argument("--body", required=True, help="sequence file supplying the body input")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--plot", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)

    if args.command == "synth":
        manifest = generate_synthetic(args.seed, args.count, args.frames)
        manifest = split_dataset(manifest, tuple(args.ratios), args.seed)
        path = save_manifest(manifest, args.out)
        print(f"wrote {len(manifest)} sequences to {path.parent}")
        return 0

    if args.command == "pretrain":
        cfg = load_config(args.config)
        manifest = load_manifest(args.data)
        out = pretrain(cfg, manifest, args.out)
        print(f"autoencoder checkpoint: {out}")
        return 0

    if args.command == "train-stage1":
        cfg = load_config(args.config)
        manifest = load_manifest(args.data)
        out = train_stage_one(cfg, manifest, args.out, args.pretrained)
        print(f"stage-one checkpoint: {out}")
        return 0

    if args.command == "train-stage2":
        cfg = load_config(args.config)
        manifest = load_manifest(args.data)
        out = train_stage_two(cfg, manifest, args.out, args.stage1)
        print(f"stage-two checkpoint: {out}")
        return 0

    if args.command == "eval":
        manifest = load_manifest(args.data)
        report = evaluate(args.ckpt, manifest, args.split, args.ckpt2,
                          seed=args.seed, k=args.k)
        Path(args.report).parent.mkdir(parents=True, exist_ok=True)
        Path(args.report).write_text(report.to_json(), encoding="utf-8")
        print(report.to_json())
        return 0

    if args.command == "sample":
        paths = sample_diverse(args.ckpt1, args.ckpt2, args.body, args.k,
                               args.seed, args.out, plot=args.plot)
        for p in paths:
            print(p)
        return 0

    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
