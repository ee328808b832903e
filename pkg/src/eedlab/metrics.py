"""The empirical equivariance deviation (EED) metric family.

Every variant walks the same double loop -- data sample x group element --
comparing f(g x) against g applied to the orbit average of f at x, under a
chosen distance. The orbit average runs over the kernel of the output-side
action: the full group when the output action is trivial (invariance), just
{identity} when it is faithful. Reports carry the full per-pair table, a
deterministic mean, and a seeded bootstrap confidence interval over samples.

Evaluations may be spread over threads (EEDLAB_THREADS); aggregation always
runs in fixed index order, so results are bit-identical for any worker count.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .actions import (GroupAction, make_dihedral_action, make_reflection_action,
                      make_rotation_action, make_trivial_action)
from .errors import (DegenerateInputError, DegenerateNormalizationError,
                     InvalidArgumentError, UnsupportedActionError)
from .groups import FiniteGroup, Subgroup, kernel_of
from .runtime import ModelSpec, prefix_function
from .tensors import EUCLIDEAN, KL_DIVERGENCE, NEG_COSINE, distance

EvalFunction = Callable[[np.ndarray], np.ndarray]

NORM_FLOOR = 1e-12
DEFAULT_RESAMPLES = 1000


@dataclass
class EedReport:
    """Per-pair distance table plus deterministic aggregate statistics."""

    metric_kind: str
    group_name: str
    sample_count: int
    element_count: int
    per_pair: list[tuple[int, int, float]]
    mean: float
    ci_low: float
    ci_high: float
    normalization_M: float | None = None
    mean_unnormalized: float | None = None
    degenerate_count: int = 0
    units: str | None = None
    config_echo: dict = field(default_factory=dict)

    def to_json_dict(self, emit_pairs: bool = False) -> dict:
        d = {
            "kind": "eed-report",
            "metric": self.metric_kind,
            "group": self.group_name,
            "sample_count": self.sample_count,
            "element_count": self.element_count,
            "mean": self.mean,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "normalization_M": self.normalization_M,
            "mean_unnormalized": self.mean_unnormalized,
            "degenerate_count": self.degenerate_count,
            "units": self.units,
            "config_echo": self.config_echo,
            "per_pair": ([[i, g, v] for i, g, v in self.per_pair]
                         if emit_pairs else None),
        }
        return d

    def csv_rows(self) -> list[tuple]:
        return [(self.metric_kind, self.group_name, i, g, v)
                for i, g, v in self.per_pair]


def _worker_count() -> int:
    raw = os.environ.get("EEDLAB_THREADS", "").strip()
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _map_rows(fn: Callable[[int], object], n: int) -> list:
    """Evaluate fn(0..n-1), possibly on threads, gathered in index order."""
    workers = min(_worker_count(), max(1, n))
    if workers <= 1:
        return [fn(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(n)))


def _seq_mean(values: Sequence[float]) -> float:
    arr = np.asarray(list(values), dtype=np.float64)
    return kernels.seqsum(arr) / arr.size


def bootstrap_ci(values: Sequence[float], level: float = 0.95,
                 resamples: int = DEFAULT_RESAMPLES, seed: int = 0) -> tuple[float, float]:
    """Seeded percentile bootstrap of the mean, widened to contain it."""
    vals = np.asarray(list(values), dtype=np.float64)
    if vals.size == 0:
        raise InvalidArgumentError("bootstrap needs at least one value")
    if not 0.0 < level < 1.0:
        raise InvalidArgumentError(f"confidence level must be in (0,1), got {level}")
    point = _seq_mean(vals)
    if vals.size == 1:
        return (point, point)
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, vals.size, size=(resamples, vals.size))
    means = vals[idx].mean(axis=1)
    lo = float(np.percentile(means, 100.0 * (1.0 - level) / 2.0))
    hi = float(np.percentile(means, 100.0 * (1.0 + level) / 2.0))
    return (min(lo, point), max(hi, point))


def _build_report(metric_kind: str, group: FiniteGroup,
                  rows: list[list[float | None]], *,
                  seed: int = 0, resamples: int = DEFAULT_RESAMPLES,
                  normalization_M: float | None = None,
                  mean_unnormalized: float | None = None,
                  degenerate_count: int = 0, units: str | None = None,
                  config: dict | None = None) -> EedReport:
    per_pair = [(i, g, float(v))
                for i, row in enumerate(rows)
                for g, v in enumerate(row) if v is not None]
    if not per_pair:
        raise DegenerateInputError(f"{metric_kind}: every (sample, element) pair "
                                   "was excluded as degenerate")
    mean = _seq_mean([v for _, _, v in per_pair])
    sample_means = [_seq_mean([v for v in row if v is not None])
                    for row in rows if any(v is not None for v in row)]
    lo, hi = bootstrap_ci(sample_means, 0.95, resamples, seed=seed + 0x5eed)
    return EedReport(
        metric_kind=metric_kind,
        group_name=group.name,
        sample_count=len(rows),
        element_count=group.order,
        per_pair=per_pair,
        mean=mean,
        ci_low=min(lo, mean),
        ci_high=max(hi, mean),
        normalization_M=normalization_M,
        mean_unnormalized=mean_unnormalized,
        degenerate_count=degenerate_count,
        units=units,
        config_echo=dict(config or {}),
    )


def _with_context(exc: Exception, sample: int, element: int):
    raise type(exc)(f"sample {sample}, element {element}: {exc}") from exc


def orbit_average(f: EvalFunction, x: np.ndarray, action_x: GroupAction,
                  kernel: Subgroup) -> np.ndarray:
    """Mean of f(g x) over the kernel of the output action.

    For a trivial kernel this is f(x) itself, bit-exactly; for the whole
    group it is the full orbit mean.
    """
    if kernel.parent != action_x.group:
        raise InvalidArgumentError("kernel subgroup belongs to a different group")
    if kernel.members == (0,):
        return np.asarray(f(x))
    outs = [np.asarray(f(action_x.apply(g, x))) for g in kernel.members]
    acc = np.zeros(outs[0].shape, dtype=np.float64)
    for o in outs:
        if o.shape != outs[0].shape:
            raise InvalidArgumentError("f returned inconsistent shapes over the orbit")
        acc += o.astype(np.float64)
    return (acc / float(len(outs))).astype(outs[0].dtype)


def generic_eed(f: EvalFunction, action_x: GroupAction, action_y: GroupAction,
                m: str, data: Sequence[np.ndarray], *, seed: int = 0,
                resamples: int = DEFAULT_RESAMPLES,
                config: dict | None = None) -> EedReport:
    """Mean over (x, g) of m(f(g x), g fhat(x)) -- the general deviation."""
    if action_x.group != action_y.group:
        raise InvalidArgumentError("input and output actions use different groups")
    data = list(data)
    if not data:
        raise InvalidArgumentError("empty data sample")
    kern = kernel_of(action_y)
    order = action_x.group.order

    def row(i):
        x = data[i]
        fhat = orbit_average(f, x, action_x, kern)
        vals = []
        for g in range(order):
            try:
                vals.append(distance(m, np.asarray(f(action_x.apply(g, x))),
                                     action_y.apply(g, fhat)))
            except InvalidArgumentError as exc:
                _with_context(exc, i, g)
            except DegenerateInputError as exc:
                _with_context(exc, i, g)
        return vals

    rows = _map_rows(row, len(data))
    units = "nats" if m == KL_DIVERGENCE else None
    return _build_report("generic", action_x.group, rows, seed=seed,
                         resamples=resamples, units=units, config=config)


def _derived_input_action(action_y: GroupAction, input_shape: tuple[int, ...]) -> GroupAction:
    """Input-side action matching a hidden/output action's group and flavor."""
    g = action_y.group
    if action_y.kind in ("rotation", "regular-channel", "trivial"):
        if g.kind == "cyclic":
            return make_rotation_action(g, input_shape)
    if action_y.kind == "dihedral":
        return make_dihedral_action(g, input_shape)
    if action_y.kind == "reflection-vertical":
        return make_reflection_action(g, input_shape)
    raise InvalidArgumentError(
        f"cannot derive an input action for {action_y.kind}; pass action_input")


def channelwise_eed(model: ModelSpec, layer_index: int, action_stack: GroupAction,
                    data: Sequence[np.ndarray], *, action_input: GroupAction | None = None,
                    seed: int = 0, resamples: int = DEFAULT_RESAMPLES,
                    config: dict | None = None) -> EedReport:
    """Negative mean per-channel cosine similarity at a hidden stack.

    Channels whose norm falls below the cosine floor on either side are
    excluded from that pair's average and counted, not scored.
    """
    if not 1 <= layer_index <= len(model.layers):
        raise InvalidArgumentError(f"layer index {layer_index} out of range")
    stack_shape = model.layer_shapes[layer_index - 1]
    if len(stack_shape) != 3:
        raise InvalidArgumentError(
            f"layer {layer_index} output {stack_shape} is not a (C,H,W) stack")
    if tuple(action_stack.carrier) != tuple(stack_shape):
        raise InvalidArgumentError(
            f"action carrier {action_stack.carrier} does not match layer output {stack_shape}")
    if action_input is None:
        action_input = _derived_input_action(action_stack, model.input_shape)
    if action_input.group != action_stack.group:
        raise InvalidArgumentError("input and stack actions use different groups")
    data = list(data)
    if not data:
        raise InvalidArgumentError("empty data sample")
    f_l = prefix_function(model, layer_index)
    kern = kernel_of(action_stack)
    order = action_stack.group.order
    channels = stack_shape[0]

    def row(i):
        x = data[i]
        fhat = orbit_average(f_l, x, action_input, kern)
        vals = []
        degen = 0
        for g in range(order):
            a = f_l(action_input.apply(g, x))
            b = action_stack.apply(g, fhat)
            terms = []
            for c in range(channels):
                try:
                    terms.append(distance(NEG_COSINE, a[c], b[c]))
                except DegenerateInputError:
                    degen += 1
            vals.append(_seq_mean(terms) if terms else None)
        return vals, degen

    results = _map_rows(row, len(data))
    rows = [r[0] for r in results]
    degenerate = sum(r[1] for r in results)
    return _build_report("channelwise", action_stack.group, rows, seed=seed,
                         resamples=resamples, degenerate_count=degenerate,
                         config=config)


def _pairwise_normalizer(feats: list[np.ndarray], m: str) -> float:
    """Mean pairwise distance (euclidean) or cosine similarity over features."""
    if len(feats) < 2:
        raise InvalidArgumentError("normalization sample needs at least 2 points")
    vals = []
    for i in range(len(feats)):
        for j in range(i + 1, len(feats)):
            d = distance(m, feats[i], feats[j])
            vals.append(-d if m == NEG_COSINE else d)
    return _seq_mean(vals)


def latent_eed(feature: EvalFunction, action_x: GroupAction, m: str,
               data: Sequence[np.ndarray], norm_sample: Sequence[np.ndarray],
               normalize: bool = True, *, seed: int = 0,
               resamples: int = DEFAULT_RESAMPLES,
               config: dict | None = None) -> EedReport:
    """Distance of latent features to their orbit mean, scaled by the mean
    pairwise feature distance M over a reference sample.

    The output action is trivial (invariance of the feature extractor), so
    the orbit mean runs over the whole group. The unnormalized mean is
    always carried alongside; M is attached only when normalize is on.
    """
    if m not in (EUCLIDEAN, NEG_COSINE):
        raise InvalidArgumentError(f"latent EED supports euclidean or neg-cosine, got {m!r}")
    data = list(data)
    norm_sample = list(norm_sample)
    if not data:
        raise InvalidArgumentError("empty data sample")
    feats = [np.asarray(feature(t), dtype=np.float64) for t in norm_sample]
    sizes = {f.shape for f in feats}
    if len(sizes) > 1:
        raise InvalidArgumentError(f"feature sizes disagree across norm sample: {sizes}")
    norm_m = _pairwise_normalizer(feats, m)
    if abs(norm_m) < NORM_FLOOR:
        raise DegenerateNormalizationError(
            f"normalization constant {norm_m:.3g} vanishes: feature extractor "
            "is (numerically) constant on the reference sample")
    order = action_x.group.order

    def row(i):
        x = data[i]
        zs = [np.asarray(feature(action_x.apply(g, x))) for g in range(order)]
        if any(z.shape != zs[0].shape for z in zs):
            raise InvalidArgumentError(f"sample {i}: feature sizes disagree over orbit")
        acc = np.zeros(zs[0].shape, dtype=np.float64)
        for z in zs:
            acc += z.astype(np.float64)
        fhat = (acc / float(order)).astype(zs[0].dtype)
        raw = []
        for g in range(order):
            try:
                raw.append(distance(m, zs[g], fhat))
            except DegenerateInputError as exc:
                _with_context(exc, i, g)
        return raw

    raw_rows = _map_rows(row, len(data))
    mean_raw = _seq_mean([v for r in raw_rows for v in r])
    if normalize:
        rows = [[v / norm_m for v in r] for r in raw_rows]
    else:
        rows = raw_rows
    return _build_report("latent", action_x.group, rows, seed=seed,
                         resamples=resamples,
                         normalization_M=norm_m if normalize else None,
                         mean_unnormalized=mean_raw, config=config)


def softmax_eed(model_fn: EvalFunction, action_x: GroupAction,
                data: Sequence[np.ndarray], *, seed: int = 0,
                resamples: int = DEFAULT_RESAMPLES,
                config: dict | None = None) -> EedReport:
    """Mean KL divergence of output distributions from their orbit mean (nats)."""
    data = list(data)
    if not data:
        raise InvalidArgumentError("empty data sample")
    order = action_x.group.order

    def row(i):
        x = data[i]
        outs = [np.asarray(model_fn(action_x.apply(g, x))) for g in range(order)]
        acc = np.zeros(outs[0].shape, dtype=np.float64)
        for o in outs:
            acc += o.astype(np.float64)
        fhat = acc / float(order)
        vals = []
        for g in range(order):
            try:
                vals.append(distance(KL_DIVERGENCE, outs[g], fhat))
            except InvalidArgumentError as exc:
                _with_context(exc, i, g)
        return vals

    rows = _map_rows(row, len(data))
    return _build_report("softmax", action_x.group, rows, seed=seed,
                         resamples=resamples, units="nats", config=config)


def filter_orbit_metric(filters: np.ndarray, group: FiniteGroup,
                        trials: int = 50, seed: int = 0) -> float:
    """Average over random (filter, channel) picks of the minimum distance
    between any rotated copy of that channel and any channel of any other
    filter. Zero when filters come in complete rotation orbits.
    """
    filters = np.asarray(filters)
    if filters.ndim != 4:
        raise InvalidArgumentError(f"expected (F,C,h,w) filters, got {filters.shape}")
    f_count, c_count, h, w = filters.shape
    if f_count < 2:
        raise InvalidArgumentError("need at least 2 filters for a cross-filter minimum")
    if h != w:
        raise InvalidArgumentError(f"filters must be square, got {h}x{w}")
    if group.kind != "cyclic" or group.order not in (1, 2, 4):
        raise UnsupportedActionError(
            "filter rotation is exact only for c1, c2, c4; interpolated filter "
            "rotation is excluded by design")
    step = 4 // group.order
    rng = np.random.default_rng(seed)
    mins = []
    for _ in range(max(1, trials)):
        i = int(rng.integers(f_count))
        t = int(rng.integers(c_count))
        best = np.inf
        for g in range(group.order):
            rotated = np.ascontiguousarray(np.rot90(filters[i, t], g * step))
            for j in range(f_count):
                if j == i:
                    continue
                for k in range(c_count):
                    best = min(best, distance(EUCLIDEAN, rotated, filters[j, k]))
        mins.append(best)
    return _seq_mean(mins)


def symmetrize(f: EvalFunction, action_x: GroupAction) -> EvalFunction:
    """Group-mean wrapper: x -> mean_g f(g x), exactly invariant for exact actions."""
    order = action_x.group.order

    def fn(x: np.ndarray) -> np.ndarray:
        outs = [np.asarray(f(action_x.apply(g, x)), dtype=np.float64)
                for g in range(order)]
        acc = np.zeros(outs[0].shape, dtype=np.float64)
        for o in outs:
            acc += o
        return acc / float(order)

    return fn


# --- activation-grid variants -------------------------------------------
#
# A grid holds pre-computed activations A[x, g] = f(g x) dumped by an
# external toolchain; the input-side transform was applied before dumping,
# so only the output-side action (if any) is applied here.


def generic_eed_grid(grid, action_y: GroupAction | None, m: str, *,
                     seed: int = 0, resamples: int = DEFAULT_RESAMPLES,
                     config: dict | None = None,
                     metric_kind: str = "generic") -> EedReport:
    group = grid.group
    order = group.order
    if action_y is not None and action_y.group != group:
        raise InvalidArgumentError("grid group and output action group differ")
    if action_y is None:
        members = tuple(range(order))
    else:
        members = kernel_of(action_y).members

    def row(i):
        outs = [np.asarray(grid.get(i, g)) for g in range(order)]
        acc = np.zeros(outs[0].shape, dtype=np.float64)
        for gm in members:
            acc += outs[gm].astype(np.float64)
        fhat = (acc / float(len(members))).astype(outs[0].dtype)
        vals = []
        for g in range(order):
            target = fhat if action_y is None else action_y.apply(g, fhat)
            try:
                vals.append(distance(m, outs[g], target))
            except (InvalidArgumentError, DegenerateInputError) as exc:
                _with_context(exc, i, g)
        return vals

    rows = _map_rows(row, grid.sample_count)
    units = "nats" if m == KL_DIVERGENCE else None
    return _build_report(metric_kind, group, rows, seed=seed,
                         resamples=resamples, units=units, config=config)


def latent_eed_grid(grid, m: str, normalize: bool = True, *, seed: int = 0,
                    resamples: int = DEFAULT_RESAMPLES,
                    config: dict | None = None) -> EedReport:
    if m not in (EUCLIDEAN, NEG_COSINE):
        raise InvalidArgumentError(f"latent EED supports euclidean or neg-cosine, got {m!r}")
    norm_feats = grid.norm_features()
    if norm_feats is None:
        raise InvalidArgumentError("activation grid carries no normalization sample")
    feats = [np.asarray(f, dtype=np.float64) for f in norm_feats]
    norm_m = _pairwise_normalizer(feats, m)
    if abs(norm_m) < NORM_FLOOR:
        raise DegenerateNormalizationError(
            f"normalization constant {norm_m:.3g} vanishes on the grid's reference sample")
    base = generic_eed_grid(grid, None, m, seed=seed, resamples=resamples,
                            config=config, metric_kind="latent")
    mean_raw = base.mean
    if not normalize:
        base.mean_unnormalized = mean_raw
        return base
    rows: list[list[float | None]] = [[] for _ in range(base.sample_count)]
    for i, g, v in base.per_pair:
        rows[i].append(v / norm_m)
    report = _build_report("latent", grid.group, rows, seed=seed,
                           resamples=resamples, normalization_M=norm_m,
                           mean_unnormalized=mean_raw, config=config)
    return report


def softmax_eed_grid(grid, *, seed: int = 0, resamples: int = DEFAULT_RESAMPLES,
                     config: dict | None = None) -> EedReport:
    report = generic_eed_grid(grid, None, KL_DIVERGENCE, seed=seed,
                              resamples=resamples, config=config,
                              metric_kind="softmax")
    return report


def channelwise_eed_grid(grid, action_stack: GroupAction, *, seed: int = 0,
                         resamples: int = DEFAULT_RESAMPLES,
                         config: dict | None = None) -> EedReport:
    group = grid.group
    if action_stack.group != group:
        raise InvalidArgumentError("grid group and stack action group differ")
    members = kernel_of(action_stack).members
    order = group.order

    def row(i):
        outs = [np.asarray(grid.get(i, g)) for g in range(order)]
        if outs[0].ndim != 3:
            raise InvalidArgumentError("channelwise grid entries must be (C,H,W) stacks")
        acc = np.zeros(outs[0].shape, dtype=np.float64)
        for gm in members:
            acc += outs[gm].astype(np.float64)
        fhat = (acc / float(len(members))).astype(outs[0].dtype)
        vals = []
        degen = 0
        for g in range(order):
            b = action_stack.apply(g, fhat)
            terms = []
            for c in range(outs[g].shape[0]):
                try:
                    terms.append(distance(NEG_COSINE, outs[g][c], b[c]))
                except DegenerateInputError:
                    degen += 1
            vals.append(_seq_mean(terms) if terms else None)
        return vals, degen

    results = _map_rows(row, grid.sample_count)
    rows = [r[0] for r in results]
    degenerate = sum(r[1] for r in results)
    return _build_report("channelwise", group, rows, seed=seed,
                         resamples=resamples, degenerate_count=degenerate,
                         config=config)
