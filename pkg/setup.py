"""Build script for the optional compiled gate-kernel extension.

The package is fully functional without the extension (a NumPy fallback is
selected at import time), so any build failure here downgrades to a
pure-Python install instead of aborting.
"""

import os
import sys

from setuptools import Extension, setup


def make_extensions():
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError:
        return []

    compile_args = ["-O3"]
    link_args = []
    if os.environ.get("QFLOW_NO_OPENMP", "") != "1" and sys.platform != "darwin":
        compile_args.append("-fopenmp")
        link_args.append("-fopenmp")

    ext = Extension(
        "qflow._kernels",
        ["src/qflow/_kernels.pyx"],
        include_dirs=[numpy.get_include()],
        extra_compile_args=compile_args,
        extra_link_args=link_args,
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    try:
        return cythonize([ext], language_level=3)
    except Exception as exc:  # pragma: no cover - build-env dependent
        print(f"qflow: skipping compiled kernels ({exc})", file=sys.stderr)
        return []


setup(ext_modules=make_extensions())
