"""Concrete group actions on images, channel stacks, vectors, and outputs.

Rotations by multiples of 90 degrees are exact index permutations; other
angles use inverse-mapped bilinear interpolation with zero fill about the
pixel-grid center ((H-1)/2, (W-1)/2), counter-clockwise. Permutation-kind
actions compose bit-exactly; interpolated ones only approximately, and the
axiom checker reports their residual instead of failing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import kernels
from .errors import InvalidArgumentError
from .groups import FiniteGroup, Subgroup, trivial_subgroup, whole_group


def rotate2(img: np.ndarray, k: int, n: int) -> np.ndarray:
    """Rotate a square H x W image counter-clockwise by 2*pi*k/n."""
    img = np.asarray(img)
    if img.ndim != 2 or img.shape[0] != img.shape[1]:
        raise InvalidArgumentError(f"rotation needs a square image, got {img.shape}")
    if not 0 <= k < n:
        raise InvalidArgumentError(f"rotation index {k} outside [0, {n})")
    if (4 * k) % n == 0:
        return np.ascontiguousarray(np.rot90(img, (4 * k) // n))
    theta = 2.0 * math.pi * k / n
    img32 = np.ascontiguousarray(img, dtype=np.float32)
    return kernels.rotate_bilinear(img32, math.cos(theta), math.sin(theta))


def reflect2(img: np.ndarray) -> np.ndarray:
    """Reflect across the vertical axis (column reversal)."""
    img = np.asarray(img)
    if img.ndim != 2:
        raise InvalidArgumentError(f"reflection needs a 2-d image, got ndim={img.ndim}")
    return np.ascontiguousarray(img[:, ::-1])


def circular_mask(img: np.ndarray) -> np.ndarray:
    """Zero out pixels farther than (H-1)/2 from the image center."""
    img = np.asarray(img)
    if img.ndim != 2 or img.shape[0] != img.shape[1]:
        raise InvalidArgumentError(f"mask needs a square image, got {img.shape}")
    h = img.shape[0]
    c = (h - 1) / 2.0
    rows = np.arange(h)[:, None] - c
    cols = np.arange(h)[None, :] - c
    keep = rows * rows + cols * cols <= c * c
    return np.ascontiguousarray(np.where(keep, img, np.zeros((), dtype=img.dtype)))


def _spatial_rotate(x: np.ndarray, k: int, n: int) -> np.ndarray:
    """Rotate an HxW image or every channel of a CxHxW stack."""
    if x.ndim == 2:
        return rotate2(x, k, n)
    out = np.empty_like(x)
    for c in range(x.shape[0]):
        out[c] = rotate2(x[c], k, n)
    return out


def _spatial_reflect(x: np.ndarray) -> np.ndarray:
    if x.ndim == 2:
        return reflect2(x)
    return np.ascontiguousarray(x[:, :, ::-1])


@dataclass(frozen=True)
class GroupAction:
    """A map (group element, tensor) -> tensor with a declared kernel."""

    group: FiniteGroup
    carrier: tuple[int, ...]
    kind: str
    name: str
    declared_kernel: Subgroup | None
    is_permutation: bool     # exact index permutation of the carrier
    exact: bool              # composition law holds bit-exactly
    _apply: Callable[[int, np.ndarray], np.ndarray] = field(repr=False)

    def apply(self, g: int, x: np.ndarray) -> np.ndarray:
        g = int(g)
        if not 0 <= g < self.group.order:
            raise InvalidArgumentError(f"element {g} outside group of order {self.group.order}")
        x = np.asarray(x)
        if x.shape != self.carrier:
            raise InvalidArgumentError(
                f"tensor shape {x.shape} does not match action carrier {self.carrier}")
        return self._apply(g, x)


def _square_spatial(carrier: tuple[int, ...]) -> tuple[int, int]:
    if len(carrier) == 2:
        h, w = carrier
    elif len(carrier) == 3:
        _, h, w = carrier
    else:
        raise InvalidArgumentError(f"expected HxW or CxHxW carrier, got {carrier}")
    if h != w:
        raise InvalidArgumentError(f"carrier spatial dims must be square, got {h}x{w}")
    return h, w


def make_rotation_action(group: FiniteGroup, carrier: tuple[int, ...]) -> GroupAction:
    """Element k rotates every channel independently by 2*pi*k/n."""
    if group.kind != "cyclic":
        raise InvalidArgumentError(
            "rotation action needs a cyclic group; use make_dihedral_action for d<n>")
    n = group.order
    h, _ = _square_spatial(carrier)
    exact = all((4 * k) % n == 0 for k in range(n))
    kernel = whole_group(group) if (h == 1 or n == 1) else trivial_subgroup(group)

    def apply(g, x):
        return _spatial_rotate(x, g, n)

    return GroupAction(group, tuple(carrier), "rotation", "rot", kernel,
                       is_permutation=exact, exact=exact, _apply=apply)


def make_reflection_action(group: FiniteGroup, carrier: tuple[int, ...]) -> GroupAction:
    """Order-2 reflection across the vertical axis."""
    if group.order != 2:
        raise InvalidArgumentError("reflection action needs a group of order 2")
    if len(carrier) not in (2, 3):
        raise InvalidArgumentError(f"expected HxW or CxHxW carrier, got {carrier}")
    w = carrier[-1]
    kernel = whole_group(group) if w == 1 else trivial_subgroup(group)

    def apply(g, x):
        return _spatial_reflect(x) if g == 1 else x.copy()

    return GroupAction(group, tuple(carrier), "reflection-vertical", "reflect-v",
                       kernel, is_permutation=True, exact=True, _apply=apply)


def make_dihedral_action(group: FiniteGroup, carrier: tuple[int, ...]) -> GroupAction:
    """Element (k, s) reflects s times across the vertical axis, then rotates by k."""
    if group.kind != "dihedral":
        raise InvalidArgumentError("dihedral action needs a d<n> group")
    n = group.order // 2
    h, _ = _square_spatial(carrier)
    exact = all((4 * k) % n == 0 for k in range(n))
    kernel = whole_group(group) if h == 1 else trivial_subgroup(group)

    def apply(g, x):
        k, s = g % n, g // n
        y = _spatial_reflect(x) if s else x
        return _spatial_rotate(y, k, n) if k else (y.copy() if y is x else y)

    return GroupAction(group, tuple(carrier), "dihedral", "rot", kernel,
                       is_permutation=exact, exact=exact, _apply=apply)


def make_regular_channel_action(group: FiniteGroup, carrier: tuple[int, ...]) -> GroupAction:
    """Rotate channels spatially and roll slots within each size-n block.

    Element j sends block b, slot t to slot (t+j) mod n, after rotating each
    channel by 2*pi*j/n. This is the transformation law of features produced
    by regular group convolutions.
    """
    if group.kind != "cyclic":
        raise InvalidArgumentError("regular-channel action needs a cyclic group")
    n = group.order
    if len(carrier) != 3:
        raise InvalidArgumentError(f"regular-channel action needs a CxHxW carrier, got {carrier}")
    c, h, w = carrier
    if c % n != 0:
        raise InvalidArgumentError(f"channel count {c} not divisible by group order {n}")
    _square_spatial(carrier)
    blocks = c // n
    exact = all((4 * k) % n == 0 for k in range(n))
    # j != 0 always rolls channel slots, so only n == 1 gives a non-trivial kernel.
    kernel = whole_group(group) if n == 1 else trivial_subgroup(group)

    def apply(g, x):
        rotated = _spatial_rotate(x, g, n)
        stacked = rotated.reshape(blocks, n, h, w)
        rolled = np.roll(stacked, shift=g, axis=1)
        return np.ascontiguousarray(rolled.reshape(c, h, w))

    return GroupAction(group, tuple(carrier), "regular-channel", f"regular:{n}",
                       kernel, is_permutation=exact, exact=exact, _apply=apply)


def make_trivial_action(group: FiniteGroup, carrier: tuple[int, ...]) -> GroupAction:
    """Every element acts as the identity."""
    def apply(g, x):
        return x.copy()

    return GroupAction(group, tuple(carrier), "trivial", "trivial",
                       whole_group(group), is_permutation=True, exact=True, _apply=apply)


def make_permutation_action(group: FiniteGroup, tables: np.ndarray,
                            carrier: tuple[int, ...], name: str = "permutation") -> GroupAction:
    """Action from explicit index permutations of the flattened carrier.

    tables[g, i] gives the flat source index for output position i. The
    composition law is verified exhaustively at construction.
    """
    tables = np.asarray(tables, dtype=np.int64)
    size = int(np.prod(carrier))
    if tables.shape != (group.order, size):
        raise InvalidArgumentError(
            f"permutation tables must be (order, size) = ({group.order}, {size}), "
            f"got {tables.shape}")
    idx = np.arange(size)
    for g in group.elements():
        if not np.array_equal(np.sort(tables[g]), idx):
            raise InvalidArgumentError(f"row {g} is not a permutation")
    if not np.array_equal(tables[0], idx):
        raise InvalidArgumentError("identity row must be the identity permutation")
    for g2 in group.elements():
        for g1 in group.elements():
            composed = tables[g1][tables[g2]]
            if not np.array_equal(tables[group.compose(g2, g1)], composed):
                raise InvalidArgumentError(
                    f"permutation tables violate the action axiom at ({g2},{g1})")
    members = tuple(int(g) for g in group.elements() if np.array_equal(tables[g], idx))
    kernel = Subgroup(group, members)

    def apply(g, x):
        return np.ascontiguousarray(x.reshape(-1)[tables[g]].reshape(carrier))

    return GroupAction(group, tuple(carrier), "permutation", name,
                       kernel, is_permutation=True, exact=True, _apply=apply)


def make_custom_action(group: FiniteGroup, carrier: tuple[int, ...],
                       fn: Callable[[int, np.ndarray], np.ndarray],
                       declared_kernel: Subgroup, exact: bool = True,
                       name: str = "custom") -> GroupAction:
    """Arbitrary linear action given by a callable; kernel must be declared."""
    def apply(g, x):
        return np.asarray(fn(g, x))

    return GroupAction(group, tuple(carrier), "custom", name,
                       declared_kernel, is_permutation=False, exact=exact, _apply=apply)


@dataclass(frozen=True)
class ActionAxiomReport:
    """Result of the composition-law check.

    passed is True/False for exact actions and None for interpolated ones,
    where only the residual is meaningful.
    """

    exact: bool
    passed: bool | None
    max_deviation: float
    pairs_checked: int

    def __bool__(self) -> bool:
        return self.passed is not False


def verify_action_axiom(action: GroupAction, samples: int = 2, seed: int = 0) -> ActionAxiomReport:
    """Check apply(g2, apply(g1, x)) against apply(g2*g1, x) on random tensors."""
    rng = np.random.default_rng(seed)
    order = action.group.order
    worst = 0.0
    pairs = 0
    for _ in range(max(1, samples)):
        x = rng.standard_normal(action.carrier).astype(np.float32)
        for g1 in range(order):
            gx = action.apply(g1, x)
            for g2 in range(order):
                lhs = action.apply(g2, gx)
                rhs = action.apply(action.group.compose(g2, g1), x)
                dev = float(np.max(np.abs(lhs.astype(np.float64) - rhs.astype(np.float64))))
                worst = max(worst, dev)
                pairs += 1
    if action.exact:
        return ActionAxiomReport(True, worst == 0.0, worst, pairs)
    return ActionAxiomReport(False, None, worst, pairs)


def action_by_name(name: str, group: FiniteGroup, carrier: tuple[int, ...]) -> GroupAction:
    """Parse CLI action names: rot, reflect-v, regular:<n>, trivial."""
    name = name.strip().lower()
    if name == "rot":
        if group.kind == "dihedral":
            return make_dihedral_action(group, carrier)
        return make_rotation_action(group, carrier)
    if name == "reflect-v":
        return make_reflection_action(group, carrier)
    if name.startswith("regular:"):
        n = int(name.split(":", 1)[1])
        if n != group.order:
            raise InvalidArgumentError(
                f"regular:{n} requires a cyclic group of order {n}, got order {group.order}")
        return make_regular_channel_action(group, carrier)
    if name == "trivial":
        return make_trivial_action(group, carrier)
    raise InvalidArgumentError(f"unknown action {name!r}")
