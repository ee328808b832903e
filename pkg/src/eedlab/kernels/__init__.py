"""Kernel backend selection.

The compiled core (eedlab.kernels._ckernels, built from Cython) is preferred;
the pure numpy backend is the fallback. Both produce bit-identical results,
so the choice only affects speed. Override with EEDLAB_BACKEND=c|python;
requesting the compiled core when it failed to build is an error rather than
a silent slowdown.
"""

from __future__ import annotations

import importlib
import os

from ..errors import InvalidArgumentError

_VALID = ("", "c", "python")


def load_backend(name: str):
    """Import a specific backend module (used by benchmarks and tests)."""
    if name == "c":
        return importlib.import_module("eedlab.kernels._ckernels")
    if name == "python":
        return importlib.import_module("eedlab.kernels._pykernels")
    raise InvalidArgumentError(f"unknown kernel backend {name!r}")


def _select():
    requested = os.environ.get("EEDLAB_BACKEND", "").strip().lower()
    if requested not in _VALID:
        raise InvalidArgumentError(
            f"EEDLAB_BACKEND={requested!r} not understood; use 'c' or 'python'")
    if requested == "python":
        return load_backend("python")
    try:
        return load_backend("c")
    except ImportError:
        if requested == "c":
            raise
        return load_backend("python")


_impl = _select()

BACKEND = _impl.BACKEND_NAME
seqsum = _impl.seqsum
seqdot = _impl.seqdot
conv2d = _impl.conv2d
linear = _impl.linear
avgpool2 = _impl.avgpool2
maxpool2 = _impl.maxpool2
rotate_bilinear = _impl.rotate_bilinear
