"""Build script: compiles the optional Cython stepping kernel.

The package works without the extension (a numpy fallback is selected at
import time), so any failure here degrades to a pure-Python install.
Set ROUGHWAVE_NO_EXT=1 to skip the extension build entirely.
"""

import os

from setuptools import setup

ext_modules = []
if not os.environ.get("ROUGHWAVE_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools.extension import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "roughwave._kernels",
                    ["src/roughwave/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
