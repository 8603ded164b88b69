"""Build script for the compiled convolution/pooling kernels.

The extension is optional: if Cython or a C compiler is unavailable the
package installs anyway and falls back to the numpy kernels at import time.
"""
from setuptools import setup

try:
    import numpy as np
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "suscept.kernels._conv",
                sources=["src/suscept/kernels/_conv.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "language_level": "3",
        },
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
