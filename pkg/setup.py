"""Builds the optional compiled kernel extension.

The package works without it: skilltriage._kernels falls back to the
pure-Python implementations when the extension is missing.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "skilltriage._kernels._speedups",
                ["src/skilltriage/_kernels/_speedups.pyx"],
                optional=True,
            )
        ],
        language_level="3",
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
