"""Train / predict entry points for the reference next-symbol model."""

from __future__ import annotations

import argparse
import sys

from .predict import predict_file
from .training import TrainerConfig, train


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="metahmm-trainer",
        description="Reference causal-transformer trainer for the benchmark harness.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train on a sequence dataset")
    p_train.add_argument("--config", required=True, help="trainer config JSON")
    p_train.add_argument("--checkpoint", default=None, help="checkpoint path override")
    p_train.add_argument("--updates", type=int, default=None, help="update count override")
    p_train.add_argument("--quiet", action="store_true", help="suppress progress lines")

    p_pred = sub.add_parser("predict", help="emit a prediction file from a checkpoint")
    p_pred.add_argument("--checkpoint", required=True)
    p_pred.add_argument("--sequences", required=True, help="sequence JSONL to predict on")
    p_pred.add_argument("--out", required=True, help="binary prediction file path")

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "train":
            config = TrainerConfig.from_file(args.config)
            if args.checkpoint:
                config = TrainerConfig(**{**config.__dict__, "checkpoint": args.checkpoint})
            if args.updates is not None:
                config = TrainerConfig(**{**config.__dict__, "updates": args.updates})
            result = train(config, quiet=args.quiet)
            print(
                f"trained {result.parameters} parameters: loss "
                f"{result.first_batch_loss:.4f} -> {result.final_loss:.4f}, "
                f"checkpoint {result.checkpoint_path}"
            )
        else:
            count = predict_file(args.checkpoint, args.sequences, args.out)
            print(f"{count} prediction records -> {args.out}")
        return 0
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
