"""Builds the optional Cython kernels (tape interpreter, simplex enumeration).

If Cython or a C compiler is missing the package still installs and falls
back to the numpy interpreter at import time.
"""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("WBNMPC_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        def _ext(name, src):
            return Extension(
                name, [src],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )

        ext_modules = cythonize(
            [
                _ext("wbnmpc.symgraph._tape_kernel", "src/wbnmpc/symgraph/_tape_kernel.pyx"),
                _ext("wbnmpc._simplex_kernel", "src/wbnmpc/_simplex_kernel.pyx"),
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
