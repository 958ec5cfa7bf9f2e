"""Build script for the optional Cython split-scan extension.

The package works without the extension (a numpy fallback is selected at
import time), so the extension is marked optional: a toolchain failure
degrades the install instead of breaking it.
"""

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

ext_modules = []
if cythonize is not None:
    ext = Extension(
        "rehabscore._kernels.split_cy",
        sources=["src/rehabscore/_kernels/split_cy.pyx"],
        include_dirs=[np.get_include()],
        # fp-contract off: keeps gain arithmetic bit-identical to the
        # numpy fallback (no FMA contraction under -O3).
        extra_compile_args=["-O3", "-ffp-contract=off"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        optional=True,
    )
    ext_modules = cythonize([ext], language_level=3)

setup(ext_modules=ext_modules)
