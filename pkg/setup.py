"""Builds the optional Cython kernels; the package still installs without them."""

import os

from setuptools import setup

ext_modules = []
if not os.environ.get("FACTORENGINE_NO_EXT"):
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [Extension("factorengine._kernels", ["src/factorengine/_kernels.pyx"],
                       include_dirs=[numpy.get_include()],
                       define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")])],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        print("Cython or numpy unavailable; installing the pure-Python backend only")

setup(ext_modules=ext_modules)
