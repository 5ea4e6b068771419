"""Build hook for the optional compiled IRLS kernel.

The package is fully functional without the extension (a numpy fallback is
selected at import time), so any failure to compile is downgraded to a
warning rather than aborting the install.
"""

import sys

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools.extension import Extension

    ext_modules = cythonize(
        [
            Extension(
                "ruvgamma._gammafit",
                ["src/ruvgamma/_gammafit.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except Exception as exc:  # pragma: no cover - exercised only on broken toolchains
    print(f"warning: compiled kernel skipped ({exc}); using the pure-python backend", file=sys.stderr)
    ext_modules = []

setup(ext_modules=ext_modules)
