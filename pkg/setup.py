"""Build script.

The compiled kernel core is optional: when Cython or a C compiler is
unavailable the package installs anyway and falls back to the pure
numpy kernels at import time.
"""

import os

from setuptools import setup

ext_modules = []
if os.environ.get("PORTRAITFORGE_NO_EXT") != "1":
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools.extension import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "portraitforge.kernels._core",
                    ["src/portraitforge/kernels/_core.pyx"],
                    include_dirs=[numpy.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    # FMA contraction would break bit-parity with the numpy path
                    extra_compile_args=["-O3", "-ffp-contract=off"],
                )
            ],
            language_level=3,
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
