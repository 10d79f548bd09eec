"""Build script for the optional compiled kernel.

The package works without the extension (pure-Python fallback); the kernel
just makes the Monte Carlo loops fast. Set IRWALK_NO_EXT=1 to skip building it.
"""

import os
from os.path import join

from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("IRWALK_NO_EXT"):
    import numpy as np
    from Cython.Build import cythonize

    ext = Extension(
        "irwalk._kernels",
        ["src/irwalk/_kernels.pyx"],
        include_dirs=[np.get_include()],
        library_dirs=[join(np.get_include(), "..", "..", "random", "lib")],
        libraries=["npyrandom"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3", "-ffp-contract=off"],
    )
    ext_modules = cythonize(
        [ext],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )

setup(ext_modules=ext_modules)
