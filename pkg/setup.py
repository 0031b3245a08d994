"""Build the optional Cython core; the package falls back to numpy without it."""
import os

import numpy as np
from setuptools import Extension, setup

ext_modules = []
if os.environ.get("FAIRFED_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize
    except ImportError:
        cythonize = None
    if cythonize is not None:
        directives = {
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "language_level": 3,
        }
        ext_modules = cythonize(
            [
                Extension(
                    "fairfed._speedups",
                    [os.path.join("src", "fairfed", "_speedups.pyx")],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives=directives,
        )

setup(ext_modules=ext_modules)
