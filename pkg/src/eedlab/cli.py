"""Command-line front end: reproducible EED report runs.

Every report embeds its full configuration (config_echo), so a report can be
reproduced from itself. Identical configurations produce byte-identical JSON
regardless of EEDLAB_THREADS.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import io, kernels, metrics, runtime
from .actions import action_by_name, make_trivial_action, verify_action_axiom
from .errors import (DegenerateInputError, EedlabError, FormatError,
                     InvalidArgumentError, UnsupportedActionError)
from .groups import find_axiom_violation, group_by_name, kernel_of
from .tensors import EUCLIDEAN, KL_DIVERGENCE, NEG_COSINE

ROTATION_CONVENTION = "ccw, inverse-mapped bilinear, zero fill, center (H-1)/2"


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _add_eed_args(p: _Parser):
    p.add_argument("--group", required=True, help="symmetry group, c<n> or d<n>")
    p.add_argument("--action", default="rot",
                   help="input/hidden action: rot, reflect-v, regular:<n>, trivial")
    p.add_argument("--model", help="model manifest path")
    p.add_argument("--data", help="dataset manifest path")
    p.add_argument("--activations", help="activation-grid manifest (instead of model+data)")
    p.add_argument("--layer", type=int, help="1-based layer tap (channelwise)")
    p.add_argument("--samples", type=int, default=50)
    p.add_argument("--norm-samples", type=int, default=200)
    p.add_argument("--norm-data", help="dataset for the latent normalization "
                                       "constant (default: --data itself)")
    p.add_argument("--distance", default=EUCLIDEAN,
                   choices=[EUCLIDEAN, NEG_COSINE, KL_DIVERGENCE])
    p.add_argument("--normalize", dest="normalize", action="store_true", default=True)
    p.add_argument("--no-normalize", dest="normalize", action="store_false")
    p.add_argument("--resamples", type=int, default=1000)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--emit-pairs", action="store_true")
    p.add_argument("--out", required=True, help="JSON report path")
    p.add_argument("--csv", help="optional CSV long-format path")


def build_parser() -> _Parser:
    parser = _Parser(prog="eedlab", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="command")

    eed = sub.add_parser("eed", help="run an EED measurement")
    eed.add_argument("variant", choices=["channelwise", "latent", "softmax", "generic"])
    _add_eed_args(eed)
    eed.set_defaults(func=cmd_eed)

    fo = sub.add_parser("filter-orbit", help="filter-orbit distance of a conv layer")
    fo.add_argument("--model", required=True)
    fo.add_argument("--layer", type=int, required=True, help="1-based conv layer index")
    fo.add_argument("--group", default="c4")
    fo.add_argument("--trials", type=int, default=50)
    fo.add_argument("--seed", type=int, default=42)
    fo.add_argument("--out", required=True)
    fo.set_defaults(func=cmd_filter_orbit)

    sy = sub.add_parser("synthesize", help="generate a synthetic masked dataset")
    sy.add_argument("--kind", default="gaussian-blobs", choices=list(io.SYNTH_KINDS))
    sy.add_argument("--count", type=int, default=64)
    sy.add_argument("--size", type=int, default=28)
    sy.add_argument("--classes", type=int, default=5)
    sy.add_argument("--seed", type=int, default=42)
    sy.add_argument("--out", required=True, help="output directory")
    sy.set_defaults(func=cmd_synthesize)

    rd = sub.add_parser("rotate-dataset", help="rotate a dataset by random group elements")
    rd.add_argument("--src", required=True, help="source dataset manifest")
    rd.add_argument("--group", required=True)
    rd.add_argument("--mask", dest="mask", action="store_true", default=True)
    rd.add_argument("--no-mask", dest="mask", action="store_false")
    rd.add_argument("--exclude-classes", default="", help="comma-separated labels")
    rd.add_argument("--seed", type=int, default=42)
    rd.add_argument("--out", required=True, help="output directory")
    rd.set_defaults(func=cmd_rotate_dataset)

    ve = sub.add_parser("verify", help="run group/action axiom checks")
    ve.add_argument("--group", required=True)
    ve.add_argument("--action", help="optional action to check")
    ve.add_argument("--size", type=int, default=28)
    ve.add_argument("--channels", type=int, default=0,
                    help="carrier channels (0 = plain HxW image)")
    ve.add_argument("--samples", type=int, default=2)
    ve.add_argument("--seed", type=int, default=42)
    ve.set_defaults(func=cmd_verify)

    mi = sub.add_parser("model-init", help="build an oracle or standard model on disk")
    mi.add_argument("--arch", required=True, choices=["c4", "standard"])
    mi.add_argument("--blocks", type=int, default=2)
    mi.add_argument("--channels-per-block", type=int, default=2,
                    help="base filters per block (c4 arch)")
    mi.add_argument("--channels", default="8,16",
                    help="comma-separated per-block channels (standard arch)")
    mi.add_argument("--classes", type=int, default=5)
    mi.add_argument("--image-size", type=int, default=28)
    mi.add_argument("--seed", type=int, default=42)
    mi.add_argument("--out", required=True, help="output directory")
    mi.set_defaults(func=cmd_model_init)

    return parser


def _base_config(args, variant: str) -> dict:
    return {
        "subcommand": f"eed {variant}",
        "group": args.group,
        "action": args.action,
        "metric": variant,
        "model": args.model,
        "data": args.data,
        "activations": args.activations,
        "layer": args.layer,
        "samples": args.samples,
        "norm_samples": args.norm_samples,
        "norm_data": args.norm_data,
        "distance": args.distance,
        "normalize": args.normalize,
        "resamples": args.resamples,
        "seed": args.seed,
        "emit_pairs": args.emit_pairs,
        "out": args.out,
        "csv": args.csv,
        "backend": kernels.BACKEND,
        "rotation_convention": ROTATION_CONVENTION,
        "kl_units": "nats",
    }


def _subsample(items: list, count: int, seed: int) -> tuple[list, list[int]]:
    if count >= len(items):
        return list(items), list(range(len(items)))
    rng = np.random.default_rng(seed)
    idx = [int(i) for i in rng.permutation(len(items))[:count]]
    return [items[i] for i in idx], idx


def _model_inputs(man: io.DatasetManifest, model: runtime.ModelSpec) -> list[np.ndarray]:
    images = io.load_dataset_tensors(man)
    cin = model.input_shape[0]
    out = []
    for img in images:
        if img.ndim == 2 and cin == 1:
            img = img[None, :, :]
        if img.shape != model.input_shape:
            raise InvalidArgumentError(
                f"dataset image shape {img.shape} does not fit model input "
                f"{model.input_shape}")
        out.append(np.ascontiguousarray(img, dtype=np.float32))
    return out


def _write_report(report, args) -> None:
    io.save_json(report.to_json_dict(emit_pairs=args.emit_pairs), args.out)
    if args.csv:
        with open(args.csv, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["metric", "group", "sample_idx", "element_idx", "value"])
            for row in report.csv_rows():
                w.writerow(row)
    print(f"{report.metric_kind} {report.group_name}: mean={report.mean:.6g} "
          f"ci=[{report.ci_low:.6g}, {report.ci_high:.6g}] -> {args.out}")


def cmd_eed(args) -> int:
    group = group_by_name(args.group)
    config = _base_config(args, args.variant)

    if args.activations:
        grid = io.load_activation_grid(args.activations)
        if grid.group != group:
            raise InvalidArgumentError(
                f"grid group {grid.group.name} does not match --group {args.group}")
        config["grid_layer"] = grid.layer
        if args.variant == "latent":
            report = metrics.latent_eed_grid(grid, args.distance, args.normalize,
                                             seed=args.seed, resamples=args.resamples,
                                             config=config)
        elif args.variant == "softmax":
            report = metrics.softmax_eed_grid(grid, seed=args.seed,
                                              resamples=args.resamples, config=config)
        elif args.variant == "channelwise":
            shape = grid.get(0, 0).shape
            action = action_by_name(args.action, group, shape)
            report = metrics.channelwise_eed_grid(grid, action, seed=args.seed,
                                                  resamples=args.resamples, config=config)
        else:
            report = metrics.generic_eed_grid(grid, None, args.distance,
                                              seed=args.seed, resamples=args.resamples,
                                              config=config)
        _write_report(report, args)
        return 0

    if not args.model or not args.data:
        raise _UsageError("eed needs --model and --data (or --activations)")
    model = io.load_model(args.model)
    man = io.load_dataset_manifest(args.data)
    inputs = _model_inputs(man, model)
    data, picked = _subsample(inputs, args.samples, args.seed)
    config["sample_indices"] = picked
    config["data_split"] = man.split
    config["data_name"] = man.name
    action_x = action_by_name(args.action if not args.action.startswith("regular") else "rot",
                              group, model.input_shape)

    if args.variant == "channelwise":
        layer = args.layer
        if layer is None:
            if not model.block_taps:
                raise InvalidArgumentError("model has no block taps; pass --layer")
            layer = model.block_taps[-1]
            config["layer"] = layer
        stack_shape = model.layer_shapes[layer - 1]
        action_stack = action_by_name(args.action, group, stack_shape)
        report = metrics.channelwise_eed(model, layer, action_stack, data,
                                         action_input=action_x, seed=args.seed,
                                         resamples=args.resamples, config=config)
    elif args.variant == "latent":
        feature = runtime.feature_function(model)
        if args.norm_data:
            norm_man = io.load_dataset_manifest(args.norm_data)
            norm_pool = _model_inputs(norm_man, model)
        else:
            norm_pool = inputs
        norm_sample, norm_idx = _subsample(norm_pool, args.norm_samples, args.seed + 1)
        config["norm_sample_indices"] = norm_idx
        config["m_on_eval_data"] = args.norm_data is None
        report = metrics.latent_eed(feature, action_x, args.distance, data,
                                    norm_sample, args.normalize, seed=args.seed,
                                    resamples=args.resamples, config=config)
    elif args.variant == "softmax":
        report = metrics.softmax_eed(runtime.model_function(model), action_x, data,
                                     seed=args.seed, resamples=args.resamples,
                                     config=config)
    else:
        action_y = make_trivial_action(group, model.output_shape)
        report = metrics.generic_eed(runtime.model_function(model), action_x, action_y,
                                     args.distance, data, seed=args.seed,
                                     resamples=args.resamples, config=config)
    _write_report(report, args)
    return 0


def cmd_filter_orbit(args) -> int:
    group = group_by_name(args.group)
    model = io.load_model(args.model)
    if not 1 <= args.layer <= len(model.layers):
        raise InvalidArgumentError(f"layer {args.layer} out of range")
    layer = model.layers[args.layer - 1]
    if layer.kind == "conv2d":
        filters = layer.params["weight"]
    elif layer.kind in ("groupconv-lift", "groupconv"):
        filters = layer.expanded_weight()
    else:
        raise InvalidArgumentError(f"layer {args.layer} ({layer.kind}) has no filters")
    value = metrics.filter_orbit_metric(filters, group, args.trials, args.seed)
    payload = {
        "kind": "filter-orbit-report",
        "value": value,
        "group": group.name,
        "trials": args.trials,
        "config_echo": {
            "subcommand": "filter-orbit",
            "model": args.model,
            "layer": args.layer,
            "group": args.group,
            "trials": args.trials,
            "seed": args.seed,
            "out": args.out,
            "backend": kernels.BACKEND,
        },
    }
    io.save_json(payload, args.out)
    print(f"filter-orbit {group.name}: value={value:.6g} -> {args.out}")
    return 0


def cmd_synthesize(args) -> int:
    man = io.synthesize_dataset(args.kind, args.count, args.size, args.classes,
                                args.seed, args.out)
    print(f"synthesized {len(man.items)} images -> {Path(args.out) / 'dataset.json'}")
    return 0


def cmd_rotate_dataset(args) -> int:
    group = group_by_name(args.group)
    src = io.load_dataset_manifest(args.src)
    excl = [int(tok) for tok in args.exclude_classes.split(",") if tok.strip() != ""]
    man = io.build_rotated_dataset(src, group, args.mask, excl, args.seed, args.out)
    print(f"rotated {len(man.items)} images ({man.classes} classes) -> "
          f"{Path(args.out) / 'dataset.json'}")
    return 0


def cmd_verify(args) -> int:
    group = group_by_name(args.group)
    problem = find_axiom_violation(group)
    if problem is not None:
        print(f"FAIL group {group.name}: {problem}")
        return 2
    print(f"ok group {group.name}: axioms hold over the full table "
          f"(order {group.order})")
    if args.action:
        carrier = (args.size, args.size) if args.channels == 0 \
            else (args.channels, args.size, args.size)
        action = action_by_name(args.action, group, carrier)
        rep = verify_action_axiom(action, samples=args.samples, seed=args.seed)
        kern = kernel_of(action)
        if rep.passed is True:
            print(f"ok action {action.name} on {carrier}: composition exact over "
                  f"{rep.pairs_checked} pairs; kernel = {list(kern.members)}")
        elif rep.passed is None:
            print(f"ok action {action.name} on {carrier}: interpolated; max "
                  f"composition residual {rep.max_deviation:.3e} over "
                  f"{rep.pairs_checked} pairs (reported, not asserted)")
        else:
            print(f"FAIL action {action.name} on {carrier}: max deviation "
                  f"{rep.max_deviation:.3e}")
            return 2
    return 0


def cmd_model_init(args) -> int:
    if args.arch == "c4":
        model = runtime.build_c4_equivariant_model(
            args.blocks, args.channels_per_block, args.classes, args.seed,
            image_size=args.image_size)
    else:
        channels = [int(tok) for tok in args.channels.split(",") if tok.strip()]
        model = runtime.build_standard_cnn(args.blocks, channels, args.classes,
                                           args.seed, image_size=args.image_size)
    path = io.save_model(model, args.out)
    print(f"built {model.name} ({len(model.layers)} layers, taps "
          f"{list(model.block_taps)}) -> {path}")
    return 0


def dispatch(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    if not getattr(args, "command", None):
        parser.print_usage(sys.stderr)
        return 1
    try:
        return args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DegenerateInputError as exc:
        print(f"degenerate numerics: {exc}", file=sys.stderr)
        return 3
    except (FormatError, InvalidArgumentError, UnsupportedActionError,
            FileNotFoundError, EedlabError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
