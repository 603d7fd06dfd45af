"""Build the optional OpenMP node kernels.

If Cython or a C compiler is missing the package still installs and runs on
the numpy fallback.
"""
import os
import sys

from setuptools import setup

ext_modules = []
if os.environ.get("VISCOTHERM_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        openmp = [] if sys.platform == "darwin" else ["-fopenmp"]
        ext = Extension(
            "viscotherm._kernels",
            ["src/viscotherm/_kernels.pyx"],
            include_dirs=[np.get_include()],
            extra_compile_args=["-O3"] + openmp,
            extra_link_args=openmp,
            define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        )
        ext_modules = cythonize([ext], compiler_directives={"language_level": 3})
    except ImportError as exc:
        print(f"building without compiled kernels: {exc}", file=sys.stderr)

setup(ext_modules=ext_modules)
