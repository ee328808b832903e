"""Dense float32 tensors and the distance functions used by every metric.

Storage is 32-bit; every reduction accumulates in float64 with a sequential
(index-order) sum so that reports are bit-stable regardless of worker count
or kernel backend. KL divergence is reported in nats.
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .errors import DegenerateInputError, InvalidArgumentError

EUCLIDEAN = "euclidean"
NEG_COSINE = "neg-cosine"
KL_DIVERGENCE = "kl-divergence"
DISTANCE_KINDS = (EUCLIDEAN, NEG_COSINE, KL_DIVERGENCE)

KL_EPS = 1e-7
COSINE_NORM_FLOOR = 1e-12


def tensor(data, dims: tuple[int, ...] | None = None) -> np.ndarray:
    """Validated float32 C-order tensor: positive dims, finite values."""
    arr = np.ascontiguousarray(data, dtype=np.float32)
    if dims is not None:
        arr = arr.reshape(dims)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if any(d <= 0 for d in arr.shape):
        raise InvalidArgumentError(f"tensor dims must be positive, got {arr.shape}")
    if not np.isfinite(arr).all():
        raise InvalidArgumentError("tensor contains NaN or Inf")
    return arr


def check_tensor(t: np.ndarray) -> np.ndarray:
    return tensor(t)


def l2_norm(a: np.ndarray) -> float:
    """Float64 sequential-order Euclidean norm."""
    a64 = np.asarray(a, dtype=np.float64).ravel()
    return float(np.sqrt(kernels.seqdot(a64, a64)))


def _as_prob(p: np.ndarray, label: str) -> np.ndarray:
    p64 = np.asarray(p, dtype=np.float64).ravel()
    if (p64 < -1e-7).any():
        raise InvalidArgumentError(f"{label} has negative entries; not a distribution")
    total = kernels.seqsum(p64)
    if abs(total - 1.0) > 1e-5:
        raise InvalidArgumentError(
            f"{label} sums to {total:.6g}, not 1 within 1e-5; not a distribution")
    clamped = np.clip(p64, KL_EPS, 1.0)
    return clamped / kernels.seqsum(clamped)


def distance(kind: str, a: np.ndarray, b: np.ndarray) -> float:
    """Distance between equal-shape tensors; see module docstring for units."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise InvalidArgumentError(f"shape mismatch: {a.shape} vs {b.shape}")
    if kind == EUCLIDEAN:
        diff = a.astype(np.float64).ravel() - b.astype(np.float64).ravel()
        return float(np.sqrt(kernels.seqdot(diff, diff)))
    if kind == NEG_COSINE:
        a64 = a.astype(np.float64).ravel()
        b64 = b.astype(np.float64).ravel()
        na = np.sqrt(kernels.seqdot(a64, a64))
        nb = np.sqrt(kernels.seqdot(b64, b64))
        if na < COSINE_NORM_FLOOR or nb < COSINE_NORM_FLOOR:
            raise DegenerateInputError(
                f"cosine similarity undefined: norms {na:.3g}, {nb:.3g}")
        return float(-kernels.seqdot(a64, b64) / (na * nb))
    if kind == KL_DIVERGENCE:
        pa = _as_prob(a, "first argument")
        pb = _as_prob(b, "second argument")
        return float(kernels.seqsum(pa * np.log(pa / pb)))
    raise InvalidArgumentError(f"unknown distance kind {kind!r}")


def channel(t: np.ndarray, i: int) -> np.ndarray:
    """Copy of the i-th H x W slice of a (C,H,W) stack."""
    t = np.asarray(t)
    if t.ndim != 3:
        raise InvalidArgumentError(f"expected a (C,H,W) tensor, got ndim={t.ndim}")
    if not 0 <= i < t.shape[0]:
        raise InvalidArgumentError(f"channel {i} out of range for C={t.shape[0]}")
    return t[i].copy()
