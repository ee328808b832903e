# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernel backend.

Mirrors _pykernels operation for operation: same reduction order, same
float64 intermediates, products rounded before each add (the build disables
FMA contraction). Outputs must match the numpy backend bit-for-bit.
"""

from libc.math cimport floor, INFINITY

import numpy as np

BACKEND_NAME = "c"


cdef double _seqsum_mv(const double[::1] a):
    cdef Py_ssize_t i, n = a.shape[0]
    cdef double acc
    if n == 0:
        return 0.0
    acc = a[0]
    for i in range(1, n):
        acc = acc + a[i]
    return acc


def seqsum(a):
    """Sequential (left-fold) sum of a float64 vector."""
    arr = np.ascontiguousarray(a, dtype=np.float64).ravel()
    return _seqsum_mv(arr)


def seqdot(a, b):
    """Sequential dot product: round each product, then left-fold the sum."""
    cdef const double[::1] av = np.ascontiguousarray(a, dtype=np.float64).ravel()
    cdef const double[::1] bv = np.ascontiguousarray(b, dtype=np.float64).ravel()
    cdef Py_ssize_t i, n = av.shape[0]
    cdef double acc
    if n == 0:
        return 0.0
    acc = av[0] * bv[0]
    for i in range(1, n):
        acc = acc + av[i] * bv[i]
    return acc


def conv2d(const float[:, :, ::1] x, const float[:, :, :, ::1] w, bias, int stride, int pad):
    """Cross-correlation of a (C,H,W) float32 input with (O,C,kh,kw) filters."""
    cdef Py_ssize_t cin = x.shape[0], h = x.shape[1], wd = x.shape[2]
    cdef Py_ssize_t cout = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t ho = (h + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t wo = (wd + 2 * pad - kw) // stride + 1
    out_arr = np.empty((cout, ho, wo), dtype=np.float32)
    cdef float[:, :, ::1] out = out_arr
    cdef bint has_bias = bias is not None
    cdef const double[::1] bias_mv
    if has_bias:
        bias_mv = np.ascontiguousarray(bias, dtype=np.float64)
    cdef Py_ssize_t o, c, a, b, i, j, hi, wj
    cdef double acc, v
    for o in range(cout):
        for i in range(ho):
            for j in range(wo):
                acc = bias_mv[o] if has_bias else 0.0
                for c in range(cin):
                    for a in range(kh):
                        hi = i * stride - pad + a
                        for b in range(kw):
                            wj = j * stride - pad + b
                            if 0 <= hi < h and 0 <= wj < wd:
                                v = x[c, hi, wj]
                            else:
                                v = 0.0
                            acc = acc + (<double> w[o, c, a, b]) * v
                out[o, i, j] = <float> acc
    return out_arr


def linear(const float[:, ::1] w, const float[::1] x, bias):
    """(O,I) weights times (I,) input, float64 accumulation over I in order."""
    cdef Py_ssize_t nout = w.shape[0], nin = w.shape[1]
    out_arr = np.empty(nout, dtype=np.float32)
    cdef float[::1] out = out_arr
    cdef bint has_bias = bias is not None
    cdef const double[::1] bias_mv
    if has_bias:
        bias_mv = np.ascontiguousarray(bias, dtype=np.float64)
    cdef Py_ssize_t o, i
    cdef double acc
    for o in range(nout):
        acc = bias_mv[o] if has_bias else 0.0
        for i in range(nin):
            acc = acc + (<double> w[o, i]) * (<double> x[i])
        out[o] = <float> acc
    return out_arr


def avgpool2(const float[:, :, ::1] x, int window, int stride):
    """Non-padded average pooling over (C,H,W)."""
    cdef Py_ssize_t c = x.shape[0], h = x.shape[1], wd = x.shape[2]
    cdef Py_ssize_t ho = (h - window) // stride + 1
    cdef Py_ssize_t wo = (wd - window) // stride + 1
    out_arr = np.empty((c, ho, wo), dtype=np.float32)
    cdef float[:, :, ::1] out = out_arr
    cdef Py_ssize_t k, i, j, a, b
    cdef double acc, denom = <double> (window * window)
    for k in range(c):
        for i in range(ho):
            for j in range(wo):
                acc = 0.0
                for a in range(window):
                    for b in range(window):
                        acc = acc + (<double> x[k, i * stride + a, j * stride + b])
                out[k, i, j] = <float> (acc / denom)
    return out_arr


def maxpool2(const float[:, :, ::1] x, int window, int stride):
    """Non-padded max pooling over (C,H,W)."""
    cdef Py_ssize_t c = x.shape[0], h = x.shape[1], wd = x.shape[2]
    cdef Py_ssize_t ho = (h - window) // stride + 1
    cdef Py_ssize_t wo = (wd - window) // stride + 1
    out_arr = np.empty((c, ho, wo), dtype=np.float32)
    cdef float[:, :, ::1] out = out_arr
    cdef Py_ssize_t k, i, j, a, b
    cdef float best, v
    for k in range(c):
        for i in range(ho):
            for j in range(wo):
                best = -INFINITY
                for a in range(window):
                    for b in range(window):
                        v = x[k, i * stride + a, j * stride + b]
                        if v > best:
                            best = v
                out[k, i, j] = best
    return out_arr


def rotate_bilinear(const float[:, ::1] img, double cos_t, double sin_t):
    """Inverse-mapped bilinear rotation about the pixel-grid center."""
    cdef Py_ssize_t h = img.shape[0], w = img.shape[1]
    cdef double cy = (h - 1) / 2.0
    cdef double cx = (w - 1) / 2.0
    out_arr = np.empty((h, w), dtype=np.float32)
    cdef float[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef Py_ssize_t r0i, c0i
    cdef double uo, vo, ui, vi, rr, cc, dr, dc, v00, v01, v10, v11, val
    for i in range(h):
        vo = i - cy
        for j in range(w):
            uo = j - cx
            ui = cos_t * uo - sin_t * vo
            vi = sin_t * uo + cos_t * vo
            rr = vi + cy
            cc = ui + cx
            dr = floor(rr)
            dc = floor(cc)
            r0i = <Py_ssize_t> dr
            c0i = <Py_ssize_t> dc
            dr = rr - dr
            dc = cc - dc
            v00 = img[r0i, c0i] if (0 <= r0i < h and 0 <= c0i < w) else 0.0
            v01 = img[r0i, c0i + 1] if (0 <= r0i < h and 0 <= c0i + 1 < w) else 0.0
            v10 = img[r0i + 1, c0i] if (0 <= r0i + 1 < h and 0 <= c0i < w) else 0.0
            v11 = img[r0i + 1, c0i + 1] if (0 <= r0i + 1 < h and 0 <= c0i + 1 < w) else 0.0
            val = (1.0 - dr) * ((1.0 - dc) * v00 + dc * v01) + dr * ((1.0 - dc) * v10 + dc * v11)
            out[i, j] = <float> val
    return out_arr
