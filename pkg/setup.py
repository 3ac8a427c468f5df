"""Build script for the compiled kernel extension.

The package is fully functional without the extension (a numpy fallback is
selected at import time), so failure to compile is not fatal for development
installs; run ``pip install -e . --no-build-isolation`` to build it.
"""

from setuptools import Extension, setup

import numpy
from Cython.Build import cythonize

extensions = [
    Extension(
        "eegentropy._kernels",
        ["src/eegentropy/_kernels.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
]

setup(ext_modules=cythonize(extensions, language_level="3"))
