import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "trotterchain.kernels._evolve_cy",
                ["src/trotterchain/kernels/_evolve_cy.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )
except ImportError:
    # Pure-python fallback kernel is selected at import time; the package
    # works without the compiled extension.
    ext_modules = []

setup(ext_modules=ext_modules)
