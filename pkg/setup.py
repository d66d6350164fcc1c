"""Build script for the optional compiled kernel extension.

The package is fully functional without the extension (a pure-numpy
implementation of the same kernels is selected at import time), so the
build degrades gracefully when Cython or a C compiler is unavailable.
"""

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

ext_modules = []
if cythonize is not None:
    ext_modules = cythonize(
        [
            Extension(
                "dualhodge._kernels._cyk",
                ["src/dualhodge/_kernels/_cyk.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
