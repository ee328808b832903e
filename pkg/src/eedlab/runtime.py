"""Minimal inference-only CNN engine and the oracle model builders.

Two builders: a plain convolutional stack, and a 4-fold rotation
group-convolution model whose features transform by the regular-channel law
at every block and whose latent vector is invariant by construction (group
pooling over the 4 slots plus global spatial pooling). All arithmetic is
float32 storage with float64 accumulation via the kernel backend; forward
passes are pure functions of (weights, input), batch of one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from . import kernels
from .errors import InvalidArgumentError

BN_EPS = 1e-5

LAYER_KINDS = ("conv2d", "batchnorm", "relu", "maxpool", "avgpool",
               "groupconv-lift", "groupconv", "group-pool", "flatten",
               "linear", "softmax")


@dataclass
class LayerSpec:
    kind: str
    stride: int = 1
    padding: int = 0
    window: int = 0
    block_size: int = 1
    params: dict = field(default_factory=dict)
    _expanded: np.ndarray | None = field(default=None, repr=False, compare=False)

    def expanded_weight(self) -> np.ndarray:
        """Materialized plain-conv weights for group layers (cached)."""
        if self._expanded is None:
            if self.kind == "groupconv-lift":
                self._expanded = lift_filters(self.params["weight"], self.block_size)
            elif self.kind == "groupconv":
                self._expanded = groupconv_filters(self.params["weight"])
            else:
                raise InvalidArgumentError(f"{self.kind} has no expanded weights")
        return self._expanded


def lift_filters(base: np.ndarray, n: int) -> np.ndarray:
    """(B,Ci,kh,kw) base filters -> (B*n,Ci,kh,kw): slot t holds rot90^t."""
    if n not in (1, 2, 4):
        raise InvalidArgumentError(f"exact lifting needs n in (1,2,4), got {n}")
    b, ci, kh, kw = base.shape
    out = np.empty((b * n, ci, kh, kw), dtype=base.dtype)
    for i in range(b):
        for t in range(n):
            out[i * n + t] = np.rot90(base[i], t * (4 // n), axes=(-2, -1))
    return np.ascontiguousarray(out)


def groupconv_filters(psi: np.ndarray) -> np.ndarray:
    """(Bo,Bi,n,kh,kw) -> (Bo*n, Bi*n, kh, kw) regular group-conv weights.

    Output slot h of block bo correlates input slot g of block bi with
    rot90^h(psi[bo, bi, (g-h) mod n]).
    """
    bo, bi, n, kh, kw = psi.shape
    if n not in (1, 2, 4):
        raise InvalidArgumentError(f"exact group conv needs n in (1,2,4), got {n}")
    out = np.empty((bo * n, bi * n, kh, kw), dtype=psi.dtype)
    for o in range(bo):
        for h in range(n):
            for i in range(bi):
                for g in range(n):
                    out[o * n + h, i * n + g] = np.rot90(
                        psi[o, i, (g - h) % n], h * (4 // n), axes=(-2, -1))
    return np.ascontiguousarray(out)


def layer_output_shape(layer: LayerSpec, in_shape: tuple[int, ...]) -> tuple[int, ...]:
    """Validate a layer against its input shape and return the output shape."""
    kind = layer.kind
    if kind in ("conv2d", "groupconv-lift", "groupconv"):
        if len(in_shape) != 3:
            raise InvalidArgumentError(f"{kind} expects (C,H,W), got {in_shape}")
        c, h, w = in_shape
        if kind == "conv2d":
            co, ci, kh, kw = layer.params["weight"].shape
        elif kind == "groupconv-lift":
            bN, ci, kh, kw = layer.params["weight"].shape
            co = bN * layer.block_size
        else:
            boN, biN, n, kh, kw = layer.params["weight"].shape
            if n != layer.block_size:
                raise InvalidArgumentError("group conv slot count must equal block_size")
            ci, co = biN * n, boN * n
        if ci != c:
            raise InvalidArgumentError(f"{kind} expects {ci} input channels, got {c}")
        ho = (h + 2 * layer.padding - kh) // layer.stride + 1
        wo = (w + 2 * layer.padding - kw) // layer.stride + 1
        if ho < 1 or wo < 1:
            raise InvalidArgumentError(f"{kind} output would be empty for input {in_shape}")
        return (co, ho, wo)
    if kind == "batchnorm":
        if len(in_shape) != 3:
            raise InvalidArgumentError("batchnorm expects (C,H,W)")
        c = in_shape[0]
        if c % layer.block_size != 0:
            raise InvalidArgumentError("batchnorm block_size must divide channel count")
        expect = c // layer.block_size
        for name in ("gamma", "beta", "mean", "var"):
            if layer.params[name].shape != (expect,):
                raise InvalidArgumentError(f"batchnorm {name} must have shape ({expect},)")
        return in_shape
    if kind == "relu":
        return in_shape
    if kind in ("maxpool", "avgpool"):
        if len(in_shape) != 3:
            raise InvalidArgumentError(f"{kind} expects (C,H,W)")
        c, h, w = in_shape
        if layer.window > h or layer.window > w:
            raise InvalidArgumentError(f"{kind} window {layer.window} exceeds input {h}x{w}")
        stride = layer.stride if layer.stride else layer.window
        return (c, (h - layer.window) // stride + 1, (w - layer.window) // stride + 1)
    if kind == "group-pool":
        c, h, w = in_shape
        if c % layer.block_size != 0:
            raise InvalidArgumentError("group-pool block_size must divide channel count")
        return (c // layer.block_size, h, w)
    if kind == "flatten":
        return (int(np.prod(in_shape)),)
    if kind == "linear":
        o, i = layer.params["weight"].shape
        if in_shape != (i,):
            raise InvalidArgumentError(f"linear expects ({i},), got {in_shape}")
        return (o,)
    if kind == "softmax":
        if len(in_shape) != 1:
            raise InvalidArgumentError("softmax expects a vector")
        return in_shape
    raise InvalidArgumentError(f"unknown layer kind {kind!r}")


def layer_forward(layer: LayerSpec, x: np.ndarray) -> np.ndarray:
    """Apply one layer; float32 in, float32 out."""
    kind = layer.kind
    if kind == "conv2d":
        return kernels.conv2d(x, layer.params["weight"], layer.params.get("bias"),
                              layer.stride, layer.padding)
    if kind in ("groupconv-lift", "groupconv"):
        return kernels.conv2d(x, layer.expanded_weight(), layer.params.get("bias"),
                              layer.stride, layer.padding)
    if kind == "batchnorm":
        c = x.shape[0]
        reps = c // layer.params["gamma"].shape[0]
        gamma = np.repeat(layer.params["gamma"].astype(np.float64), reps)
        beta = np.repeat(layer.params["beta"].astype(np.float64), reps)
        mean = np.repeat(layer.params["mean"].astype(np.float64), reps)
        var = np.repeat(layer.params["var"].astype(np.float64), reps)
        scale = gamma / np.sqrt(var + BN_EPS)
        y = (x.astype(np.float64) - mean[:, None, None]) * scale[:, None, None] \
            + beta[:, None, None]
        return y.astype(np.float32)
    if kind == "relu":
        return np.maximum(x, np.float32(0.0))
    if kind == "maxpool":
        return kernels.maxpool2(x, layer.window, layer.stride or layer.window)
    if kind == "avgpool":
        return kernels.avgpool2(x, layer.window, layer.stride or layer.window)
    if kind == "group-pool":
        n = layer.block_size
        c, h, w = x.shape
        stacked = x.reshape(c // n, n, h, w).astype(np.float64)
        acc = np.zeros((c // n, h, w))
        for t in range(n):
            acc += stacked[:, t]
        return (acc / float(n)).astype(np.float32)
    if kind == "flatten":
        return np.ascontiguousarray(x.reshape(-1))
    if kind == "linear":
        return kernels.linear(layer.params["weight"], x, layer.params.get("bias"))
    if kind == "softmax":
        x64 = x.astype(np.float64)
        e = np.exp(x64 - x64.max())
        return (e / kernels.seqsum(e)).astype(np.float32)
    raise InvalidArgumentError(f"unknown layer kind {kind!r}")


@dataclass
class ModelSpec:
    """Inference-only layered network; split_index separates the feature
    extractor (layers 1..split_index, 1-based) from the classifier head."""

    name: str
    input_shape: tuple[int, ...]
    layers: list[LayerSpec]
    split_index: int
    block_taps: tuple[int, ...] = ()
    regular_block_size: int | None = None
    layer_shapes: tuple[tuple[int, ...], ...] = ()

    def __post_init__(self):
        shapes = []
        shape = tuple(self.input_shape)
        for layer in self.layers:
            shape = layer_output_shape(layer, shape)
            shapes.append(shape)
        self.layer_shapes = tuple(shapes)
        if not 1 <= self.split_index < len(self.layers):
            raise InvalidArgumentError(
                f"split_index {self.split_index} outside [1, {len(self.layers)})")
        if len(self.layer_shapes[self.split_index - 1]) != 1:
            raise InvalidArgumentError("feature output at split_index must be a vector")

    @property
    def output_shape(self) -> tuple[int, ...]:
        return self.layer_shapes[-1]


def model_forward_collect(model: ModelSpec, x: np.ndarray,
                          taps: Iterable[int] = ()) -> tuple[dict[int, np.ndarray], np.ndarray]:
    """Single forward pass; returns tapped activations (1-based layer index)
    plus the final output. Bit-identical to running each prefix separately."""
    taps = set(int(t) for t in taps)
    bad = [t for t in taps if not 1 <= t <= len(model.layers)]
    if bad:
        raise InvalidArgumentError(f"invalid tap indices {bad}; model has "
                                   f"{len(model.layers)} layers")
    x = np.asarray(x, dtype=np.float32)
    if x.shape != model.input_shape:
        raise InvalidArgumentError(
            f"input shape {x.shape} does not match model input {model.input_shape}")
    acts: dict[int, np.ndarray] = {}
    cur = np.ascontiguousarray(x)
    for i, layer in enumerate(model.layers, start=1):
        cur = layer_forward(layer, cur)
        if i in taps:
            acts[i] = cur
    return acts, cur


def forward(model: ModelSpec, x: np.ndarray) -> np.ndarray:
    return model_forward_collect(model, x)[1]


def prefix_function(model: ModelSpec, upto: int) -> Callable[[np.ndarray], np.ndarray]:
    """The composition of the first `upto` layers as a plain callable."""
    if not 1 <= upto <= len(model.layers):
        raise InvalidArgumentError(f"layer index {upto} outside [1, {len(model.layers)}]")

    def fn(x: np.ndarray) -> np.ndarray:
        return model_forward_collect(model, x, taps=(upto,))[0][upto]

    return fn


def feature_function(model: ModelSpec) -> Callable[[np.ndarray], np.ndarray]:
    return prefix_function(model, model.split_index)


def model_function(model: ModelSpec) -> Callable[[np.ndarray], np.ndarray]:
    def fn(x: np.ndarray) -> np.ndarray:
        return forward(model, x)

    return fn


def _uniform(rng: np.random.Generator, shape, bound: float) -> np.ndarray:
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


def _bn_params(rng: np.random.Generator, m: int) -> dict:
    return {
        "gamma": rng.uniform(0.5, 1.5, size=m).astype(np.float32),
        "beta": rng.uniform(-0.1, 0.1, size=m).astype(np.float32),
        "mean": rng.uniform(-0.1, 0.1, size=m).astype(np.float32),
        "var": rng.uniform(0.5, 1.5, size=m).astype(np.float32),
    }


def _bn_identity(m: int) -> dict:
    """Untrained inference batchnorm: running mean 0, var 1, unit affine."""
    return {
        "gamma": np.ones(m, np.float32),
        "beta": np.zeros(m, np.float32),
        "mean": np.zeros(m, np.float32),
        "var": np.ones(m, np.float32),
    }


def _pool_window(h: int) -> int:
    """Largest rotation-compatible reduction step: exact tiling required."""
    if h <= 1:
        return 1
    if h % 2 == 0:
        return 2
    for d in range(3, h + 1, 2):
        if h % d == 0:
            return d
    return h


def build_c4_equivariant_model(blocks: int, channels_per_block: int, classes: int,
                               seed: int, image_size: int = 28,
                               in_channels: int = 1) -> ModelSpec:
    """Exactly 4-fold-rotation-equivariant group-convolution model.

    Block 1 lifts with all four rot90 copies of each base filter; later blocks
    use regular group convolutions; batchnorm statistics are shared across
    each block's 4 slots; pooling windows tile the plane exactly so that
    spatial reduction commutes with rotation. After the last block, mean
    pooling over the 4 slots and then over space makes the latent vector
    rotation-invariant up to float accumulation.
    """
    if blocks < 1:
        raise InvalidArgumentError("need at least one block")
    n = 4
    rng = np.random.default_rng(seed)
    layers: list[LayerSpec] = []
    taps: list[int] = []
    h = image_size
    cin = in_channels
    for b in range(blocks):
        if b == 0:
            base = _uniform(rng, (channels_per_block, cin, 3, 3),
                            1.0 / np.sqrt(cin * 9))
            layers.append(LayerSpec("groupconv-lift", stride=1, padding=1,
                                    block_size=n, params={"weight": base}))
        else:
            psi = _uniform(rng, (channels_per_block, channels_per_block, n, 3, 3),
                           1.0 / np.sqrt(channels_per_block * n * 9))
            layers.append(LayerSpec("groupconv", stride=1, padding=1,
                                    block_size=n, params={"weight": psi}))
        layers.append(LayerSpec("batchnorm", block_size=n,
                                params=_bn_params(rng, channels_per_block)))
        layers.append(LayerSpec("relu"))
        w = _pool_window(h)
        layers.append(LayerSpec("avgpool", window=w, stride=w))
        h //= w
        taps.append(len(layers))
    layers.append(LayerSpec("group-pool", block_size=n))
    if h > 1:
        layers.append(LayerSpec("avgpool", window=h, stride=h))
    layers.append(LayerSpec("flatten"))
    split = len(layers)
    layers.append(LayerSpec("linear", params={
        "weight": _uniform(rng, (classes, channels_per_block),
                           1.0 / np.sqrt(channels_per_block)),
        "bias": _uniform(rng, (classes,), 1.0 / np.sqrt(channels_per_block)),
    }))
    layers.append(LayerSpec("softmax"))
    return ModelSpec("c4-equivariant", (in_channels, image_size, image_size),
                     layers, split, tuple(taps), regular_block_size=n)


def build_standard_cnn(blocks: int, channels, classes: int, seed: int,
                       image_size: int = 28, in_channels: int = 1) -> ModelSpec:
    """Plain conv/batchnorm/relu/pool stack with a linear+softmax head."""
    if blocks < 1:
        raise InvalidArgumentError("need at least one block")
    channels = list(channels)
    if len(channels) != blocks:
        raise InvalidArgumentError(f"need {blocks} channel counts, got {len(channels)}")
    rng = np.random.default_rng(seed)
    layers: list[LayerSpec] = []
    taps: list[int] = []
    h = image_size
    cin = in_channels
    for b in range(blocks):
        cout = channels[b]
        layers.append(LayerSpec("conv2d", stride=1, padding=1, params={
            "weight": _uniform(rng, (cout, cin, 3, 3), 1.0 / np.sqrt(cin * 9)),
            "bias": _uniform(rng, (cout,), 1.0 / np.sqrt(cin * 9)),
        }))
        layers.append(LayerSpec("batchnorm", block_size=1, params=_bn_identity(cout)))
        layers.append(LayerSpec("relu"))
        w = 2 if h >= 2 else 1
        layers.append(LayerSpec("maxpool", window=w, stride=w))
        h = (h - w) // w + 1
        cin = cout
        taps.append(len(layers))
    layers.append(LayerSpec("flatten"))
    split = len(layers)
    feat = cin * h * h
    layers.append(LayerSpec("linear", params={
        "weight": _uniform(rng, (classes, feat), 1.0 / np.sqrt(feat)),
        "bias": _uniform(rng, (classes,), 1.0 / np.sqrt(feat)),
    }))
    layers.append(LayerSpec("softmax"))
    return ModelSpec("standard-cnn", (in_channels, image_size, image_size),
                     layers, split, tuple(taps), regular_block_size=None)
