"""Build script: compiles the optional fast kernels, falls back to pure Python.

The compiled extension accelerates the fixed-point inner loops; everything
works without it (``pnpreg._kernels`` selects the numpy fallback at import).
Set PNPREG_SKIP_EXT=1 to skip compilation entirely.
"""

import os

from setuptools import setup

ext_modules = []
if not os.environ.get("PNPREG_SKIP_EXT"):
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools.extension import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "pnpreg._kernels._core",
                    ["src/pnpreg/_kernels/_core.pyx"],
                    include_dirs=[numpy.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    extra_compile_args=["-O3"],
                )
            ],
            language_level=3,
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
