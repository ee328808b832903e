"""Builds the optional compiled kernel core.

The package works without it: eedlab.kernels falls back to the pure numpy
backend when the extension is missing, so a failed compile only costs speed.
"""

import warnings

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Never fail the install because the C toolchain is unavailable."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # pragma: no cover - toolchain dependent
            warnings.warn(f"skipping compiled kernels ({exc}); using pure-python backend")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # pragma: no cover - toolchain dependent
            warnings.warn(f"skipping {ext.name} ({exc}); using pure-python backend")


def extensions():
    try:
        from Cython.Build import cythonize
    except ImportError:  # pragma: no cover
        return []
    ext = Extension(
        "eedlab.kernels._ckernels",
        ["src/eedlab/kernels/_ckernels.pyx"],
        # -ffp-contract=off: no fused multiply-add, so results stay
        # bit-identical to the numpy backend's round-per-operation arithmetic.
        extra_compile_args=["-O3", "-ffp-contract=off"],
    )
    return cythonize([ext], language_level="3")


setup(ext_modules=extensions(), cmdclass={"build_ext": OptionalBuildExt})
