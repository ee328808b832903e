"""Pure numpy kernel backend.

Every function here is the reference for the compiled backend: identical
operation order, identical rounding. Sums are sequential in index order
(np.cumsum / explicit accumulation loops over the reduction index), products
are rounded before being added (the extension is compiled with FMA disabled),
and intermediates are float64 regardless of storage dtype. The two backends
must agree bit-for-bit; tests/test_kernels.py enforces this.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "python"


def seqsum(a: np.ndarray) -> float:
    """Sequential (left-fold) sum of a float64 vector."""
    a = np.ascontiguousarray(a, dtype=np.float64).ravel()
    if a.size == 0:
        return 0.0
    return float(np.cumsum(a)[-1])


def seqdot(a: np.ndarray, b: np.ndarray) -> float:
    """Sequential dot product: round each product, then left-fold the sum."""
    a = np.ascontiguousarray(a, dtype=np.float64).ravel()
    b = np.ascontiguousarray(b, dtype=np.float64).ravel()
    if a.size == 0:
        return 0.0
    return float(np.cumsum(a * b)[-1])


def conv2d(x: np.ndarray, w: np.ndarray, bias, stride: int, pad: int) -> np.ndarray:
    """Cross-correlation of a (C,H,W) float32 input with (O,C,kh,kw) filters.

    Accumulates in float64, scanning (c_in, kh, kw) in index order for every
    output pixel, then casts to float32 once.
    """
    cin, h, wd = x.shape
    cout, cin_w, kh, kw = w.shape
    assert cin == cin_w
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (wd + 2 * pad - kw) // stride + 1
    xp = np.zeros((cin, h + 2 * pad, wd + 2 * pad), dtype=np.float64)
    xp[:, pad:pad + h, pad:pad + wd] = x
    w64 = w.astype(np.float64)
    out = np.empty((cout, ho, wo), dtype=np.float32)
    hspan = (ho - 1) * stride + 1
    wspan = (wo - 1) * stride + 1
    for o in range(cout):
        acc = np.full((ho, wo), 0.0 if bias is None else np.float64(bias[o]))
        for c in range(cin):
            for a in range(kh):
                for b in range(kw):
                    win = xp[c, a:a + hspan:stride, b:b + wspan:stride]
                    acc += w64[o, c, a, b] * win
        out[o] = acc.astype(np.float32)
    return out


def linear(w: np.ndarray, x: np.ndarray, bias) -> np.ndarray:
    """(O,I) weights times (I,) input, float64 accumulation over I in order."""
    w64 = w.astype(np.float64)
    x64 = x.astype(np.float64)
    nout, nin = w64.shape
    acc = np.zeros(nout) if bias is None else bias.astype(np.float64).copy()
    for i in range(nin):
        acc += w64[:, i] * x64[i]
    return acc.astype(np.float32)


def avgpool2(x: np.ndarray, window: int, stride: int) -> np.ndarray:
    """Non-padded average pooling over (C,H,W), float64 window sums in order."""
    c, h, wd = x.shape
    ho = (h - window) // stride + 1
    wo = (wd - window) // stride + 1
    x64 = x.astype(np.float64)
    hspan = (ho - 1) * stride + 1
    wspan = (wo - 1) * stride + 1
    acc = np.zeros((c, ho, wo))
    for a in range(window):
        for b in range(window):
            acc += x64[:, a:a + hspan:stride, b:b + wspan:stride]
    return (acc / float(window * window)).astype(np.float32)


def maxpool2(x: np.ndarray, window: int, stride: int) -> np.ndarray:
    """Non-padded max pooling over (C,H,W)."""
    c, h, wd = x.shape
    ho = (h - window) // stride + 1
    wo = (wd - window) // stride + 1
    hspan = (ho - 1) * stride + 1
    wspan = (wo - 1) * stride + 1
    out = np.full((c, ho, wo), -np.inf, dtype=np.float32)
    for a in range(window):
        for b in range(window):
            np.maximum(out, x[:, a:a + hspan:stride, b:b + wspan:stride], out=out)
    return out


def rotate_bilinear(img: np.ndarray, cos_t: float, sin_t: float) -> np.ndarray:
    """Inverse-mapped bilinear rotation about the pixel-grid center.

    Output pixel (r,c) samples the input at the location obtained by rotating
    its center offset by the inverse transform; out-of-bounds reads are zero.
    """
    h, w = img.shape
    cy = (h - 1) / 2.0
    cx = (w - 1) / 2.0
    rows = np.arange(h, dtype=np.float64)[:, None] - cy
    cols = np.arange(w, dtype=np.float64)[None, :] - cx
    vo = np.broadcast_to(rows, (h, w))
    uo = np.broadcast_to(cols, (h, w))
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
        valid = (ri >= 0) & (ri < h) & (ci >= 0) & (ci < w)
        vals = img[np.clip(ri, 0, h - 1), np.clip(ci, 0, w - 1)].astype(np.float64)
        return np.where(valid, vals, 0.0)

    v00 = fetch(r0i, c0i)
    v01 = fetch(r0i, c0i + 1)
    v10 = fetch(r0i + 1, c0i)
    v11 = fetch(r0i + 1, c0i + 1)
    val = (1.0 - dr) * ((1.0 - dc) * v00 + dc * v01) + dr * ((1.0 - dc) * v10 + dc * v11)
    return val.astype(np.float32)
