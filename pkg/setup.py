"""Build script: compiles the optional Cython state-recursion kernels.

The package is fully functional without the extension (a numpy fallback is
selected at import time); the compiled core exists because batched LTI
filtering over long trajectories dominates the certification pipeline's
runtime.  Set LTIBOUND_SKIP_EXT=1 to install without attempting the build.
"""

import os

from setuptools import setup

ext_modules = []
if not os.environ.get("LTIBOUND_SKIP_EXT"):
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools.extension import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "ltibound._kernels",
                    ["src/ltibound/_kernels.pyx"],
                    include_dirs=[numpy.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        print("Cython or numpy unavailable at build time; "
              "installing with the pure-Python kernels only.")

setup(ext_modules=ext_modules)
