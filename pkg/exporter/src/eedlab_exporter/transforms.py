"""Input-side image transforms.

Same conventions as the measurement package (a golden-file test pins the two
rotation implementations to bit-identical outputs): counter-clockwise,
multiples of 90 degrees as exact index permutations, other angles by
inverse-mapped bilinear interpolation in float64 with zero fill, about the
pixel-grid center ((H-1)/2, (W-1)/2).
"""

from __future__ import annotations

import math

import numpy as np


def rotate_image(img: np.ndarray, k: int, n: int) -> np.ndarray:
    img = np.asarray(img)
    if img.ndim != 2 or img.shape[0] != img.shape[1]:
        raise ValueError(f"need a square image, got {img.shape}")
    if not 0 <= k < n:
        raise ValueError(f"element {k} outside [0, {n})")
    if (4 * k) % n == 0:
        return np.ascontiguousarray(np.rot90(img, (4 * k) // n))
    theta = 2.0 * math.pi * k / n
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    h, w = img.shape
    cy = (h - 1) / 2.0
    cx = (w - 1) / 2.0
    vo = np.broadcast_to(np.arange(h, dtype=np.float64)[:, None] - cy, (h, w))
    uo = np.broadcast_to(np.arange(w, dtype=np.float64)[None, :] - cx, (h, w))
    ui = cos_t * uo - sin_t * vo
    vi = sin_t * uo + cos_t * vo
    rr = vi + cy
    cc = ui + cx
    r0 = np.floor(rr)
    c0 = np.floor(cc)
    dr = rr - r0
    dc = cc - c0
    r0i = r0.astype(np.int64)
    c0i = c0.astype(np.int64)

    def fetch(ri, ci):
        ok = (ri >= 0) & (ri < h) & (ci >= 0) & (ci < w)
        vals = img[np.clip(ri, 0, h - 1), np.clip(ci, 0, w - 1)].astype(np.float64)
        return np.where(ok, vals, 0.0)

    v00 = fetch(r0i, c0i)
    v01 = fetch(r0i, c0i + 1)
    v10 = fetch(r0i + 1, c0i)
    v11 = fetch(r0i + 1, c0i + 1)
    val = (1.0 - dr) * ((1.0 - dc) * v00 + dc * v01) + dr * ((1.0 - dc) * v10 + dc * v11)
    return val.astype(np.float32)


def circular_mask(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img)
    h = img.shape[0]
    c = (h - 1) / 2.0
    rows = np.arange(h)[:, None] - c
    cols = np.arange(h)[None, :] - c
    keep = rows * rows + cols * cols <= c * c
    return np.ascontiguousarray(np.where(keep, img, np.zeros((), dtype=img.dtype)))
