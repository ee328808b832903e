"""Command line: export activations from a checkpoint, or train the small CNN."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .dumps import load_dataset
from .models import load_checkpoint
from .taps import TapPlan, export_activations
from .train import train_small_cnn


def build_parser():
    p = argparse.ArgumentParser(prog="eedlab-export", description=__doc__)
    sub = p.add_subparsers(dest="command", metavar="command")

    ex = sub.add_parser("export", help="dump tapped activation grids from a checkpoint")
    ex.add_argument("--checkpoint", required=True)
    ex.add_argument("--taps", required=True, help="comma-separated layer names")
    ex.add_argument("--data", required=True, help="dataset manifest")
    ex.add_argument("--out", required=True)
    ex.add_argument("--group", default="c8")
    ex.add_argument("--samples", type=int, default=50)
    ex.add_argument("--norm-samples", type=int, default=200)
    ex.add_argument("--seed", type=int, default=42)
    ex.add_argument("--name", default="export")
    ex.set_defaults(func=cmd_export)

    tr = sub.add_parser("train", help="train the small CNN on a dataset manifest")
    tr.add_argument("--data", required=True)
    tr.add_argument("--augment", choices=["on", "off"], required=True)
    tr.add_argument("--seed", type=int, required=True)
    tr.add_argument("--iters", type=int, default=2000)
    tr.add_argument("--out", required=True)
    tr.add_argument("--eval", dest="eval_manifest")
    tr.add_argument("--checkpoint-every", type=int, default=200)
    tr.set_defaults(func=cmd_train)
    return p


def _subsample(items, count, seed):
    if count >= len(items):
        return list(items)
    rng = np.random.default_rng(seed)
    return [items[int(i)] for i in rng.permutation(len(items))[:count]]


def cmd_export(args) -> int:
    group = args.group.strip().lower()
    if not (group.startswith("c") and group[1:].isdigit()):
        print(f"error: only cyclic rotation groups (c<n>) are exportable, got "
              f"{args.group}", file=sys.stderr)
        return 1
    model = load_checkpoint(args.checkpoint)
    images, _, _ = load_dataset(args.data)
    data = _subsample(images, args.samples, args.seed)
    norm = _subsample(images, args.norm_samples, args.seed + 1)
    plan = TapPlan(model=model, taps=[t for t in args.taps.split(",") if t],
                   images=data, group_order=int(group[1:]),
                   out_dir=Path(args.out), name=args.name, norm_images=norm)
    try:
        path = export_activations(plan)
    except KeyError as exc:
        print(f"error: {exc.args[0]}", file=sys.stderr)
        return 1
    print(f"exported {len(plan.taps)} grid(s) for {len(data)} samples -> {path}")
    return 0


def cmd_train(args) -> int:
    result = train_small_cnn(args.data, args.augment == "on", args.seed,
                             args.iters, args.out,
                             checkpoint_every=args.checkpoint_every,
                             eval_manifest=args.eval_manifest)
    acc = "n/a" if result.final_accuracy is None else f"{result.final_accuracy:.3f}"
    print(f"trained {args.iters} iterations (augment={args.augment}); "
          f"{len(result.checkpoints)} checkpoints; accuracy {acc}")
    return 0


def main() -> None:
    parser = build_parser()
    args = parser.parse_args()
    if not getattr(args, "command", None):
        parser.print_usage(sys.stderr)
        sys.exit(1)
    sys.exit(args.func(args))


if __name__ == "__main__":
    main()
